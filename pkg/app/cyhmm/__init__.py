"""Cyclic explicit-duration hidden Markov models"""

from .dataset import FeatureKind, IndividualSeries, TimeSeriesDataset, load_csv, write_csv
from .model import CyhmmModel, DurationFamily, DurationKind, EmissionParams
from .inference import PosteriorSummary, ViterbiPath, forward_backward, loglik, viterbi
from .training import FitConfig, FitResult, em_fit, select_state_count
from .analysis import CycleLengthReport, TrajectoryReport, cycle_lengths, feature_trajectories, feature_variability
from .clustering import ClusterAssignment, ClusterConfig, cluster_em, init_clusters

__all__ = [
    'FeatureKind', 'IndividualSeries', 'TimeSeriesDataset', 'load_csv', 'write_csv',
    'CyhmmModel', 'DurationFamily', 'DurationKind', 'EmissionParams',
    'PosteriorSummary', 'ViterbiPath', 'forward_backward', 'loglik', 'viterbi',
    'FitConfig', 'FitResult', 'em_fit', 'select_state_count',
    'CycleLengthReport', 'TrajectoryReport', 'cycle_lengths', 'feature_trajectories', 'feature_variability',
    'ClusterAssignment', 'ClusterConfig', 'cluster_em', 'init_clusters',
]
