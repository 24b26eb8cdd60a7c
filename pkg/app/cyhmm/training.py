"""
EM fitting of a CyHMM to a population of series, multi-initialization over
hypothesized cycle lengths, and cross-validated choice of the state count.
"""
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from sklearn.model_selection import KFold

from ..core.errors import ConfigError, DimensionMismatch, EmptyDataset, KindMismatch, NaNLoglik
from ..utils import metrics
from ..utils.parallel import DEFAULT_CHUNK_SIZE, chunk_ranges, ordered_map
from .dataset import FeatureKind, TimeSeriesDataset
from .inference import loglik_batch, posterior_batch
from .model import (
    LAMBDA_FLOOR,
    P_FLOOR,
    SIGMA_FLOOR_FRACTION,
    CyhmmModel,
    DurationFamily,
    DurationKind,
    EmissionParams,
    select_d_max,
)

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-6


@dataclass
class FitConfig:
    """EM settings. ``init_grid`` empty means a single init at ``cycle_length``."""
    n_states: int = 4
    cycle_length: float = 30.0
    init_grid: List[float] = field(default_factory=list)
    max_iters: int = 100
    rel_tol: float = 1e-5
    seed: int = 0
    duration_family: str = "poisson"
    d_max: Optional[int] = None
    n_workers: Optional[int] = None
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self):
        self.init_grid = [float(x) for x in (self.init_grid or [])]
        if self.n_states < 1:
            raise ConfigError(f"n_states must be >= 1, got {self.n_states}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_tol > 0:
            raise ConfigError(f"rel_tol must be > 0, got {self.rel_tol}")
        try:
            DurationKind(self.duration_family)
        except ValueError:
            raise ConfigError(f"Unknown duration family {self.duration_family!r}")
        for L0 in self.grid:
            if L0 < self.n_states:
                raise ConfigError(f"Hypothesized cycle length {L0} is shorter than J={self.n_states}")

    @property
    def grid(self) -> List[float]:
        return list(self.init_grid) if self.init_grid else [float(self.cycle_length)]

    @property
    def duration_kind(self) -> DurationKind:
        return DurationKind(self.duration_family)

    def replace(self, **changes) -> "FitConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown fit options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class FitResult:
    model: CyhmmModel
    loglik_trace: List[float]
    converged: bool
    chosen_init: Optional[float]
    init_logliks: Dict[float, float] = field(default_factory=dict)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "loglik_trace": list(self.loglik_trace),
            "converged": self.converged,
            "chosen_init": self.chosen_init,
            "init_logliks": {str(k): v for k, v in self.init_logliks.items()},
        }


@dataclass
class SufficientStats:
    """Population sums accumulated during one E-step"""
    loglik: float
    entries: np.ndarray
    weight: np.ndarray
    weight_observed: np.ndarray
    sum_x: np.ndarray
    sum_x2: Optional[np.ndarray]

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(
            self.loglik + other.loglik,
            self.entries + other.entries,
            self.weight + other.weight,
            self.weight_observed + other.weight_observed,
            self.sum_x + other.sum_x,
            None if self.sum_x2 is None else self.sum_x2 + other.sum_x2,
        )


def _global_moments(ds: TimeSeriesDataset) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    values, observed = ds.stacked()
    counts = observed.sum(axis=0)
    filled = np.where(observed, values, 0.0)
    mean = np.divide(filled.sum(axis=0), counts, out=np.zeros(ds.K), where=counts > 0)
    var = np.divide(((filled - mean) ** 2 * observed).sum(axis=0), counts, out=np.ones(ds.K), where=counts > 0)
    std = np.sqrt(var)
    std[~(std > 0)] = 1.0
    return mean, std, counts / observed.shape[0]


def _init_d_max(config: FitConfig) -> int:
    """Explicit d_max, else sized for the longest hypothesized cycle length in the grid"""
    if config.d_max is not None:
        return int(config.d_max)
    largest = max(config.grid)
    return select_d_max(max(largest / config.n_states - 1.0, LAMBDA_FLOOR), largest, config.n_states)


def initialize(config: FitConfig, ds: TimeSeriesDataset, L0: float) -> CyhmmModel:
    """Starting model for hypothesized cycle length ``L0``.

    lambda_j = L0 / J - 1 for every state; emission means are the global means
    perturbed by up to half a global standard deviation (seeded).
    """
    J = config.n_states
    if L0 < J:
        raise ConfigError(f"Hypothesized cycle length {L0} is shorter than J={J}")
    if ds.N == 0:
        raise EmptyDataset("Cannot initialize from an empty dataset")
    rng = np.random.default_rng([int(config.seed), int(round(L0 * 1000))])
    mean_remaining = max(L0 / J - 1.0, LAMBDA_FLOOR)
    if config.duration_kind is DurationKind.POISSON:
        params = np.full(J, mean_remaining)
    else:
        params = np.full(J, 1.0 / (1.0 + mean_remaining))
    durations = DurationFamily(config.duration_kind, params, _init_d_max(config))

    mean, std, observed_fraction = _global_moments(ds)
    jitter = rng.uniform(-0.5, 0.5, size=(J, ds.K))
    if ds.kind is FeatureKind.CONTINUOUS:
        emissions = EmissionParams(
            FeatureKind.CONTINUOUS,
            p_obs=np.tile(observed_fraction, (J, 1)),
            mu=mean[None] + jitter * std[None],
            sigma=np.tile(std, (J, 1)),
            sigma_floor=SIGMA_FLOOR_FRACTION * std,
        )
    else:
        logged = np.concatenate([s.any_observed() for s in ds.series])
        bernoulli_std = np.sqrt(mean * (1.0 - mean))
        emissions = EmissionParams(
            FeatureKind.BINARY,
            p_obs=np.full(J, logged.mean()),
            rate=np.clip(mean[None] + jitter * bernoulli_std[None], P_FLOOR, 1.0 - P_FLOOR),
        )
    return CyhmmModel(durations, emissions, ds.feature_names)


def _chunk_stats(model: CyhmmModel, ds: TimeSeriesDataset, indices: range) -> SufficientStats:
    batch = [ds.series[i] for i in indices]
    summaries = posterior_batch(model, batch, chunk_size=len(batch), n_workers=1)
    J, K = model.J, model.K
    continuous = model.kind is FeatureKind.CONTINUOUS
    stats = SufficientStats(
        0.0,
        np.zeros((J, model.d_max + 1)),
        np.zeros(J),
        np.zeros((J, K)) if continuous else np.zeros(J),
        np.zeros((J, K)),
        np.zeros((J, K)) if continuous else None,
    )
    for s, post in zip(batch, summaries):
        w = post.state_marginals
        x = s.filled()
        stats.loglik += post.loglik
        stats.entries += post.entry_counts
        stats.weight += w.sum(axis=0)
        if continuous:
            o = s.observed.astype(float)
            stats.weight_observed += w.T @ o
            stats.sum_x += w.T @ (o * x)
            stats.sum_x2 += w.T @ (o * x * x)
        else:
            logged = s.any_observed().astype(float)
            stats.weight_observed += w.T @ logged
            stats.sum_x += w.T @ (x * logged[:, None])
    return stats


def expectation(model: CyhmmModel, ds: TimeSeriesDataset, config: FitConfig) -> SufficientStats:
    """E-step over the population; chunks reduced in individual-index order"""
    ranges = chunk_ranges(ds.N, config.chunk_size)
    parts = ordered_map(lambda r: _chunk_stats(model, ds, r), ranges, config.n_workers)
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    metrics.SERIES_PROCESSED.inc(ds.N)
    return total


def _truncated_mean(kind: DurationKind, param: float, d_max: int) -> float:
    return float(DurationFamily(kind, [param], d_max).mean_remaining()[0])


def fit_duration_param(kind: DurationKind, mean_entry: float, d_max: int) -> float:
    """Parameter whose truncated pmf has mean ``mean_entry``.

    This is the exact M-step for the truncated family; without truncation it is
    lambda = mean (Poisson) and p = 1 / (1 + mean) (geometric).
    """
    if kind is DurationKind.POISSON:
        lo, hi = LAMBDA_FLOOR, 4.0 * max(mean_entry, d_max) + 10.0
        f = lambda lam: _truncated_mean(kind, lam, d_max) - mean_entry
    else:
        lo, hi = P_FLOOR, 1.0 - P_FLOOR
        f = lambda p: mean_entry - _truncated_mean(kind, p, d_max)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo >= 0:
        return lo
    if f_hi <= 0:
        return hi
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=1e-12))


def maximization(model: CyhmmModel, stats: SufficientStats) -> CyhmmModel:
    """M-step: duration parameters from expected entries, emissions from weighted sums"""
    d = np.arange(model.d_max + 1)
    params = model.durations.params.copy()
    for j in range(model.J):
        total = stats.entries[j].sum()
        if total > 1e-12:
            mean_entry = float(stats.entries[j] @ d / total)
            # truncated moment match; the plain param = mean_entry holds only when little mass lies past d_max
            params[j] = fit_duration_param(model.durations.kind, mean_entry, model.d_max)
    durations = model.durations.with_params(params)

    em = model.emissions
    has_weight = stats.weight > 1e-12
    if model.kind is FeatureKind.CONTINUOUS:
        w_obs = stats.weight_observed
        seen = w_obs > 1e-12
        p_obs = np.where(has_weight[:, None], w_obs / np.where(has_weight, stats.weight, 1.0)[:, None], em.p_obs)
        safe = np.where(seen, w_obs, 1.0)
        mu = np.where(seen, stats.sum_x / safe, em.mu)
        var = np.where(seen, stats.sum_x2 / safe - mu ** 2, em.sigma ** 2)
        sigma = np.sqrt(np.maximum(var, 0.0))
        emissions = EmissionParams(FeatureKind.CONTINUOUS, p_obs, mu=mu, sigma=sigma, sigma_floor=em.sigma_floor)
    else:
        w_log = stats.weight_observed
        seen = w_log > 1e-12
        p_obs = np.where(has_weight, w_log / np.where(has_weight, stats.weight, 1.0), em.p_obs)
        rate = np.where(seen[:, None], stats.sum_x / np.where(seen, w_log, 1.0)[:, None], em.rate)
        emissions = EmissionParams(FeatureKind.BINARY, p_obs, rate=rate)
    return model.replace(durations, emissions)


def _check_compatible(model: CyhmmModel, ds: TimeSeriesDataset) -> None:
    if ds.N == 0:
        raise EmptyDataset("Dataset has no series")
    if model.kind is not ds.kind:
        raise KindMismatch(f"Model is {model.kind.value}, dataset is {ds.kind.value}")
    if model.K != ds.K:
        raise DimensionMismatch(f"Model has {model.K} features, dataset {ds.K}")


def run_em(model: CyhmmModel, ds: TimeSeriesDataset, config: FitConfig,
           max_iters: Optional[int] = None) -> FitResult:
    """EM from a given starting model. The returned model is the one whose
    total loglik is the last trace entry."""
    _check_compatible(model, ds)
    max_iters = int(max_iters or config.max_iters)
    trace: List[float] = []
    converged = False
    for iteration in range(1, max_iters + 1):
        started = time.perf_counter()
        stats = expectation(model, ds, config)
        elapsed = time.perf_counter() - started
        metrics.ESTEP_SECONDS.observe(elapsed)
        metrics.EM_ITERATIONS.inc()
        if not math.isfinite(stats.loglik):
            raise NaNLoglik(f"Total loglik became {stats.loglik} at iteration {iteration}")
        metrics.FIT_LOGLIK.set(stats.loglik)
        change = math.inf
        if trace:
            change = (stats.loglik - trace[-1]) / abs(trace[-1])
            if change < -MONOTONE_SLACK:
                logger.warning(f"EM loglik decreased at iteration {iteration}: relative change {change:.3e}")
        trace.append(stats.loglik)
        logger.info(f"EM iteration {iteration}: loglik={stats.loglik:.6f} rel_change={change:.3e} "
                    f"estep={elapsed:.2f}s")
        if abs(change) < config.rel_tol:
            converged = True
            break
        if iteration < max_iters:
            model = maximization(model, stats)
    return FitResult(model, trace, converged, None)


def em_fit(config: FitConfig, ds: TimeSeriesDataset, initial_model: Optional[CyhmmModel] = None,
           max_iters: Optional[int] = None) -> FitResult:
    """Fit from every L0 in the init grid (or from ``initial_model``) and keep the best"""
    if ds.N == 0:
        raise EmptyDataset("Dataset has no series")
    if initial_model is not None:
        return run_em(initial_model, ds, config, max_iters)

    best: Optional[FitResult] = None
    init_logliks: Dict[float, float] = {}
    for L0 in config.grid:
        logger.info(f"Fitting J={config.n_states} {config.duration_family} CyHMM from cycle length {L0}")
        result = run_em(initialize(config, ds, L0), ds, config, max_iters)
        result.chosen_init = L0
        init_logliks[L0] = result.loglik
        if best is None or result.loglik > best.loglik:
            best = result
    best.init_logliks = init_logliks
    logger.info(f"Selected init {best.chosen_init} with loglik {best.loglik:.4f}")
    return best


def state_count_scores(ds: TimeSeriesDataset, candidates: Sequence[int], folds: int,
                       config: FitConfig) -> pd.DataFrame:
    """Held-out loglik per observed cell for each candidate J (individual-level folds)"""
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if ds.N < folds:
        raise ConfigError(f"{ds.N} individuals cannot be split into {folds} folds")
    splitter = KFold(n_splits=folds, shuffle=True, random_state=config.seed)
    splits = list(splitter.split(np.arange(ds.N)))
    rows = []
    for J in sorted(set(int(c) for c in candidates)):
        fold_config = config.replace(n_states=J)
        scores = []
        for fold, (train, test) in enumerate(splits):
            result = em_fit(fold_config, ds.subset(train))
            held_out = ds.subset(test)
            ll = loglik_batch(result.model, held_out.series, config.chunk_size, config.n_workers)
            cells = max(sum(s.n_observed for s in held_out.series), 1)
            scores.append(float(ll.sum()) / cells)
            logger.info(f"J={J} fold {fold}: held-out loglik per cell {scores[-1]:.5f}")
        rows.append({"n_states": J, "heldout_loglik_per_cell": float(np.mean(scores)),
                     "fold_scores": scores})
    return pd.DataFrame(rows)


def select_state_count(ds: TimeSeriesDataset, candidates: Sequence[int], folds: int,
                       config: FitConfig) -> int:
    """Candidate J with the best mean held-out loglik per observed cell; ties go to fewer states"""
    if len(set(candidates)) == 1:
        return int(next(iter(candidates)))
    scores = state_count_scores(ds, candidates, folds, config)
    best = scores.loc[scores["heldout_loglik_per_cell"].idxmax()]
    return int(best["n_states"])
