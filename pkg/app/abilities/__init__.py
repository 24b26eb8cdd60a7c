"""Pipeline steps, one ability per CLI subcommand"""

from .analyzer.cycle_analyzer import CycleAnalyzer
from .benchmark.benchmark import BenchmarkAbility
from .clustering.cluster import ClusterAbility
from .fitting.fit import FitAbility
from .fitting.select_states import SelectStatesAbility
from .preprocessing.detrend import DetrendAbility
from .simulation.simulate import SimulateAbility

__all__ = [
    'SimulateAbility',
    'DetrendAbility',
    'FitAbility',
    'SelectStatesAbility',
    'CycleAnalyzer',
    'ClusterAbility',
    'BenchmarkAbility',
]
