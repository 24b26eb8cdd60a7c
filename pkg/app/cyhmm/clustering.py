"""
Hard-assignment EM clustering of individuals with one CyHMM per cluster,
initialized by k-means on z-scored per-individual likelihoods under models fitted
to a random subset of single individuals.
"""
import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import zscore
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from ..core.errors import ClusteringError, ConfigError
from ..utils.parallel import ordered_map
from .dataset import TimeSeriesDataset
from .inference import loglik_batch
from .model import CyhmmModel
from .training import MONOTONE_SLACK, FitConfig, em_fit

logger = logging.getLogger(__name__)


@dataclass
class ClusterConfig:
    n_clusters: int = 2
    n_seed_models: Optional[int] = None
    max_outer_iters: int = 20
    warm_start_iters: int = 15
    kmeans_restarts: int = 10
    normalize_by_length: bool = False
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if self.max_outer_iters < 1 or self.warm_start_iters < 1:
            raise ConfigError("Iteration caps must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1)")

    def seed_model_count(self, N: int) -> int:
        S = self.n_seed_models if self.n_seed_models is not None else max(3 * self.n_clusters, 10)
        return int(min(S, N))

    def replace(self, **changes) -> "ClusterConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ClusterConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown cluster options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ClusterAssignment:
    ids: List[str]
    labels: np.ndarray
    models: List[CyhmmModel]
    total_loglik_trace: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def C(self) -> int:
        return len(self.models)

    @property
    def assignment(self) -> Dict[str, int]:
        """id -> cluster number in 1..C"""
        return {sid: int(label) + 1 for sid, label in zip(self.ids, self.labels)}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"id": self.ids, "cluster": self.labels.astype(int) + 1})


def _check_sizes(ds: TimeSeriesDataset, C: int) -> None:
    if C < 1:
        raise ClusteringError(f"Cluster count must be >= 1, got {C}")
    if ds.N < C:
        raise ClusteringError(f"Cannot split {ds.N} individuals into {C} clusters")


def loglik_matrix(models: Sequence[CyhmmModel], ds: TimeSeriesDataset, config: FitConfig) -> np.ndarray:
    """N x len(models) log likelihoods"""
    columns = ordered_map(lambda m: loglik_batch(m, ds.series, config.chunk_size, 1), list(models),
                          config.n_workers)
    return np.column_stack(columns)


def init_clusters(ds: TimeSeriesDataset, C: int, S: int, config: FitConfig,
                  cluster_config: Optional[ClusterConfig] = None) -> np.ndarray:
    """Initial 0-based labels from k-means on z-scored likelihood rows"""
    cluster_config = cluster_config or ClusterConfig(n_clusters=C)
    _check_sizes(ds, C)
    if C == 1:
        return np.zeros(ds.N, dtype=int)
    if S < C:
        raise ClusteringError(f"Need at least C={C} seed models, got S={S}")
    S = min(S, ds.N)
    rng = np.random.default_rng(cluster_config.seed)
    chosen = rng.choice(ds.N, size=S, replace=False)
    single = config.replace(n_workers=1)
    seed_models = ordered_map(lambda i: em_fit(single, ds.subset([int(i)])).model, list(chosen),
                              config.n_workers)
    logger.info(f"Fitted {S} seed models for cluster initialization")

    L = loglik_matrix(seed_models, ds, config)
    if cluster_config.normalize_by_length:
        L = L / np.array([s.T for s in ds.series], dtype=float)[:, None]
    Z = np.nan_to_num(zscore(L, axis=1), nan=0.0, posinf=0.0, neginf=0.0)
    kmeans = KMeans(n_clusters=C, n_init=cluster_config.kmeans_restarts, random_state=cluster_config.seed)
    with warnings.catch_warnings():
        # identical rows leave fewer distinct centroids than C; the repair below handles it
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = kmeans.fit_predict(Z).astype(int)
    return _repair_empty(labels, -kmeans.transform(Z), C)


def _repair_empty(labels: np.ndarray, L: np.ndarray, C: int) -> np.ndarray:
    labels = labels.copy()
    for c in range(C):
        if np.any(labels == c):
            continue
        sizes = np.bincount(labels, minlength=C)
        movable = np.flatnonzero(sizes[labels] > 1)
        current = L[movable, labels[movable]]
        worst = int(movable[int(np.argmin(current))])
        logger.warning(f"Cluster {c + 1} emptied; moving individual {worst} from cluster {labels[worst] + 1}")
        labels[worst] = c
    return labels


def cluster_em(ds: TimeSeriesDataset, C: int, config: FitConfig,
               cluster_config: Optional[ClusterConfig] = None,
               initial_labels: Optional[np.ndarray] = None) -> ClusterAssignment:
    """Alternate per-cluster fits and argmax-likelihood reassignment"""
    cluster_config = cluster_config or ClusterConfig(n_clusters=C)
    _check_sizes(ds, C)
    if initial_labels is None:
        initial_labels = init_clusters(ds, C, cluster_config.seed_model_count(ds.N), config, cluster_config)
    labels = np.asarray(initial_labels, dtype=int).copy()
    if labels.shape != (ds.N,) or labels.min() < 0 or labels.max() >= C:
        raise ClusteringError(f"Initial labels must be {ds.N} values in 0..{C - 1}")
    # no fit scores yet: an emptied cluster takes the first individual of a multi-member cluster
    labels = _repair_empty(labels, np.zeros((ds.N, C)), C)
    inner = config.replace(n_workers=1) if C > 1 else config

    models: List[Optional[CyhmmModel]] = [None] * C
    trace: List[float] = []
    converged = False
    for outer in range(1, cluster_config.max_outer_iters + 1):
        def fit(c):
            indices = np.flatnonzero(labels == c)
            if len(indices) == 0:
                raise ClusteringError(f"Cluster {c + 1} has no members")
            members = ds.subset(indices)
            if models[c] is None:
                return em_fit(inner, members).model
            return em_fit(inner, members, initial_model=models[c],
                          max_iters=cluster_config.warm_start_iters).model

        models = ordered_map(fit, list(range(C)), config.n_workers if C > 1 else 1)
        L = loglik_matrix(models, ds, config)
        new_labels = _repair_empty(np.argmax(L, axis=1), L, C)
        total = float(L[np.arange(ds.N), new_labels].sum())
        if trace and (total - trace[-1]) / abs(trace[-1]) < -MONOTONE_SLACK:
            logger.warning(f"Clustering loglik decreased at outer iteration {outer}")
        trace.append(total)
        changed = int(np.sum(new_labels != labels))
        logger.info(f"Cluster iteration {outer}: total loglik={total:.4f}, reassigned={changed}")
        labels = new_labels
        if changed == 0:
            converged = True
            break
    return ClusterAssignment(ds.ids, labels, list(models), trace, converged)


def cluster_summary(ds: TimeSeriesDataset, assignment: ClusterAssignment) -> pd.DataFrame:
    """Per-cluster size, mean of each feature over observed cells and missing fraction"""
    frame = ds.to_frame()
    frame["cluster"] = frame["id"].map(assignment.assignment)
    features = list(ds.feature_names)
    means = frame.groupby("cluster")[features].mean()
    missing = frame[features].isna().groupby(frame["cluster"]).mean().mean(axis=1).rename("missing_fraction")
    sizes = frame.groupby("cluster")["id"].nunique().rename("n_individuals")
    return pd.concat([sizes, means, missing], axis=1).reset_index()


def select_cluster_count(ds: TimeSeriesDataset, candidates: Sequence[int], config: FitConfig,
                         cluster_config: Optional[ClusterConfig] = None) -> pd.DataFrame:
    """Train and held-out loglik per candidate C for elbow inspection"""
    cluster_config = cluster_config or ClusterConfig()
    candidates = sorted(set(int(c) for c in candidates))
    if max(candidates) > ds.N:
        raise ClusteringError(f"Candidate {max(candidates)} exceeds {ds.N} individuals")
    rng = np.random.default_rng(cluster_config.seed)
    order = rng.permutation(ds.N)
    n_test = max(1, int(round(cluster_config.holdout_fraction * ds.N)))
    train, test = ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))
    if max(candidates) > train.N:
        raise ClusteringError(f"Candidate {max(candidates)} exceeds the {train.N} training individuals")

    rows = []
    for C in candidates:
        result = cluster_em(train, C, config, cluster_config.replace(n_clusters=C))
        held_out = loglik_matrix(result.models, test, config).max(axis=1).sum()
        rows.append({
            "n_clusters": C,
            "train_loglik": result.total_loglik_trace[-1],
            "heldout_loglik": float(held_out),
            "train_loglik_per_cell": result.total_loglik_trace[-1] / max(sum(s.n_observed for s in train), 1),
            "heldout_loglik_per_cell": float(held_out) / max(sum(s.n_observed for s in test), 1),
        })
        logger.info(f"C={C}: train={rows[-1]['train_loglik']:.3f} held-out={rows[-1]['heldout_loglik']:.3f}")
    return pd.DataFrame(rows)
