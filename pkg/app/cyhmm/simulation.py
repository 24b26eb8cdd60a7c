"""
Synthetic populations with known cycle structure.

Each individual moves through cycles whose lengths vary between and within
individuals; feature values and the chance of observing them are sinusoids of
the cycle position phi = cycle_day / cycle_length. Random streams are derived
from (seed, individual index), so output does not depend on generation order.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import ConfigError
from .analysis import variability_vector
from .dataset import FeatureKind, IndividualSeries, TimeSeriesDataset

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_POPULATION_STREAM = 1_000_000_007


@dataclass
class SimulationConfig:
    n_individuals: int = 100
    t_max: int = 120
    t_min: Optional[int] = None
    cycle_length: float = 30.0
    sigma_b: float = 1.0
    sigma_w: float = 1.0
    sigma_n: float = 0.1
    p_missing: float = 0.2
    n_features: int = 5
    kind: str = "continuous"
    seed: int = 0
    value_amplitude: Tuple[float, float] = (0.5, 1.0)
    phase: Tuple[float, float] = (0.0, TWO_PI)
    phase_jitter: float = 0.2
    offset: Tuple[float, float] = (-0.5, 0.5)
    base_rate: Tuple[float, float] = (0.2, 0.5)
    obs_amplitude: Tuple[float, float] = (0.0, 0.3)
    value_scale: float = 1.0
    min_cycle_length: int = 5

    def __post_init__(self):
        FeatureKind.parse(self.kind)
        for name in ("value_amplitude", "phase", "offset", "base_rate", "obs_amplitude"):
            low, high = (float(v) for v in getattr(self, name))
            if low > high:
                raise ConfigError(f"{name} range is empty: ({low}, {high})")
            setattr(self, name, (low, high))
        if self.sigma_b < 0 or self.sigma_w < 0 or self.sigma_n < 0 or self.phase_jitter < 0:
            raise ConfigError("Standard deviations must be >= 0")
        if not 0.0 <= self.p_missing < 1.0:
            raise ConfigError(f"p_missing must lie in [0, 1), got {self.p_missing}")
        if self.cycle_length <= 0:
            raise ConfigError("cycle_length must be > 0")
        if self.n_individuals < 1 or self.n_features < 1 or self.t_max < 1:
            raise ConfigError("n_individuals, n_features and t_max must be >= 1")
        if self.t_min is not None and not 1 <= self.t_min <= self.t_max:
            raise ConfigError("t_min must lie in [1, t_max]")
        self.min_cycle_length = max(int(self.min_cycle_length), 2)

    @property
    def feature_kind(self) -> FeatureKind:
        return FeatureKind.parse(self.kind)

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimulationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown simulation options: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass
class PositionTrace:
    cycle_day: np.ndarray
    cycle_length: np.ndarray
    mean_length: int

    @property
    def phi(self) -> np.ndarray:
        return self.cycle_day / self.cycle_length

    def realized_mean_length(self) -> float:
        """Mean length of the cycles overlapping the window"""
        starts = np.r_[True, self.cycle_day[1:] == 0]
        return float(self.cycle_length[starts].mean())


@dataclass
class SimulatedDataset:
    dataset: TimeSeriesDataset
    truth: pd.DataFrame
    trajectories: pd.DataFrame
    true_lengths: Dict[str, float]
    coefficients: pd.DataFrame
    config: Optional[SimulationConfig] = None
    populations: Dict[str, int] = field(default_factory=dict)

    def true_trajectory_matrix(self) -> np.ndarray:
        """bins x K mean observed value per cycle day"""
        table = self.trajectories.pivot(index="cycle_day", columns="feature", values="mean_value")
        return table[list(self.dataset.feature_names)].to_numpy()

    def true_variability(self) -> np.ndarray:
        matrix = self.true_trajectory_matrix()
        return variability_vector(matrix, matrix.shape[0])


def _draw_length(rng: np.random.Generator, mean: float, std: float, floor: int) -> int:
    if std == 0:
        return max(int(round(mean)), floor)
    for _ in range(1000):
        value = int(round(rng.normal(mean, std)))
        if value >= floor:
            return value
    return floor


def _series_length(rng: np.random.Generator, config: SimulationConfig) -> int:
    if config.t_min is None:
        return int(config.t_max)
    return int(rng.integers(config.t_min, config.t_max + 1))


def simulate_positions(config: SimulationConfig) -> List[PositionTrace]:
    """Cycle day and current cycle length for every individual and timestep"""
    traces = []
    for i in range(config.n_individuals):
        rng = np.random.default_rng([config.seed, i, 0])
        mean_length = _draw_length(rng, config.cycle_length, config.sigma_b, config.min_cycle_length)
        T = _series_length(rng, config)
        current = _draw_length(rng, mean_length, config.sigma_w, config.min_cycle_length)
        day = int(rng.integers(0, current))
        days, lengths = np.empty(T, dtype=int), np.empty(T, dtype=int)
        for t in range(T):
            days[t], lengths[t] = day, current
            day += 1
            if day >= current:
                day = 0
                current = _draw_length(rng, mean_length, config.sigma_w, config.min_cycle_length)
        traces.append(PositionTrace(days, lengths, mean_length))
    return traces


def _population_coefficients(config: SimulationConfig) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng([config.seed, _POPULATION_STREAM])
    K = config.n_features
    return {
        "phase": rng.uniform(*config.phase, size=K),
        "obs_phase": rng.uniform(*config.phase, size=K),
    }


def _individual_coefficients(rng: np.random.Generator, config: SimulationConfig,
                             population: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    K = config.n_features
    return {
        "amplitude": rng.uniform(*config.value_amplitude, size=K),
        "phase": population["phase"] + rng.normal(0.0, config.phase_jitter, size=K),
        "offset": rng.uniform(*config.offset, size=K),
        "base": rng.uniform(*config.base_rate, size=K),
        "obs_amplitude": rng.uniform(*config.obs_amplitude, size=K),
        "obs_phase": population["obs_phase"] + rng.normal(0.0, config.phase_jitter, size=K),
    }


def _ids(n: int) -> List[str]:
    return [f"ind{i:05d}" for i in range(n)]


def simulate_observations(config: SimulationConfig, positions: Sequence[PositionTrace]) -> SimulatedDataset:
    """Observed data given cycle positions.

    Continuous: each feature is observed with probability
    clip(1 - p_missing + a_obs sin(2 pi phi + theta_obs), 0.01, 1) and then
    equals value_scale * (a sin(2 pi phi + theta) + offset) + N(0, sigma_n^2).
    Binary: one Bernoulli draw per timestep decides whether anything is logged,
    then each feature ~ Bernoulli(clip(base + a sin(2 pi phi + theta), .01, .99)).
    """
    kind = config.feature_kind
    population = _population_coefficients(config)
    ids = _ids(len(positions))
    names = tuple(f"feature_{k}" for k in range(config.n_features))
    series, truth_frames, coefficient_rows = [], [], []
    for i, (sid, trace) in enumerate(zip(ids, positions)):
        rng = np.random.default_rng([config.seed, i, 1])
        coef = _individual_coefficients(rng, config, population)
        phi = trace.phi[:, None]
        T, K = len(trace.cycle_day), config.n_features
        obs_prob = np.clip(1.0 - config.p_missing
                           + coef["obs_amplitude"] * np.sin(TWO_PI * phi + coef["obs_phase"]), 0.01, 1.0)
        if kind is FeatureKind.CONTINUOUS:
            observed = rng.random((T, K)) < obs_prob
            signal = coef["amplitude"] * np.sin(TWO_PI * phi + coef["phase"]) + coef["offset"]
            values = config.value_scale * signal + rng.normal(0.0, 1.0, size=(T, K)) * config.sigma_n
        else:
            logged = rng.random(T) < obs_prob[:, 0]
            observed = np.repeat(logged[:, None], K, axis=1)
            rate = np.clip(coef["base"] + coef["amplitude"] * np.sin(TWO_PI * phi + coef["phase"]), 0.01, 0.99)
            values = (rng.random((T, K)) < rate).astype(float)
        series.append(IndividualSeries(sid, np.where(observed, values, np.nan), observed))
        truth_frames.append(pd.DataFrame({
            "id": sid, "t": np.arange(T), "cycle_day": trace.cycle_day,
            "cycle_length": trace.cycle_length, "phi": trace.phi,
        }))
        for k, name in enumerate(names):
            coefficient_rows.append({"id": sid, "feature": name, **{key: float(v[k]) for key, v in coef.items()}})

    dataset = TimeSeriesDataset(tuple(series), names, kind)
    truth = pd.concat(truth_frames, ignore_index=True)
    true_lengths = {sid: trace.realized_mean_length() for sid, trace in zip(ids, positions)}
    sim = SimulatedDataset(dataset, truth, pd.DataFrame(), true_lengths, pd.DataFrame(coefficient_rows), config)
    sim.trajectories = true_trajectories(dataset, truth, int(round(config.cycle_length)))
    logger.info(f"Simulated {dataset.N} {kind.value} series, missing fraction "
                f"{dataset.summary()['missing_fraction']:.3f}")
    return sim


def true_trajectories(dataset: TimeSeriesDataset, truth: pd.DataFrame, n_bins: int) -> pd.DataFrame:
    """Mean observed value of each feature per cycle-day bin (phi scaled to n_bins days)"""
    values, observed = dataset.stacked()
    bins = np.minimum((truth["phi"].to_numpy() * n_bins).astype(int), n_bins - 1)
    frame = pd.DataFrame(np.where(observed, values, np.nan), columns=list(dataset.feature_names))
    frame["cycle_day"] = bins
    means = frame.groupby("cycle_day").mean().reindex(range(n_bins))
    tidy = means.reset_index().melt(id_vars="cycle_day", var_name="feature", value_name="mean_value")
    return tidy


def simulate(config: SimulationConfig) -> SimulatedDataset:
    return simulate_observations(config, simulate_positions(config))


def simulate_populations(configs: Sequence[SimulationConfig]) -> SimulatedDataset:
    """Planted populations merged into one dataset; ids are prefixed ``p<k>_``"""
    sims = [simulate(c) for c in configs]
    kinds = {s.dataset.kind for s in sims}
    if len(kinds) != 1 or len({s.dataset.K for s in sims}) != 1:
        raise ConfigError("Populations must share feature kind and count")
    series, truth, coefficients, true_lengths, populations = [], [], [], {}, {}
    for k, sim in enumerate(sims):
        prefix = f"p{k}_"
        for s in sim.dataset.series:
            series.append(IndividualSeries(prefix + s.id, s.values, s.observed, s.start))
            populations[prefix + s.id] = k
        truth.append(sim.truth.assign(id=prefix + sim.truth["id"], population=k))
        coefficients.append(sim.coefficients.assign(id=prefix + sim.coefficients["id"], population=k))
        true_lengths.update({prefix + sid: v for sid, v in sim.true_lengths.items()})
    dataset = TimeSeriesDataset(tuple(series), sims[0].dataset.feature_names, sims[0].dataset.kind)
    truth_frame = pd.concat(truth, ignore_index=True)
    trajectories = true_trajectories(dataset, truth_frame, int(round(configs[0].cycle_length)))
    return SimulatedDataset(dataset, truth_frame, trajectories, true_lengths,
                            pd.concat(coefficients, ignore_index=True), None, populations)
