"""
Benchmark harness: runs cycle-length estimators over simulated trials with known
truth and tabulates per-individual errors.
"""
import dataclasses
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..core.errors import BaselineError, ConfigError
from ..utils.parallel import ordered_map
from .analysis import cycle_lengths, feature_trajectories
from .baselines import DEFAULT_BOUNDS, autocorrelation_period, fourier_period, partial_periodicity_period
from .dataset import FeatureKind, apply_binary_missing_rule
from .model import CyhmmModel
from .simulation import SimulatedDataset, SimulationConfig, simulate
from .training import FitConfig, em_fit

logger = logging.getLogger(__name__)

REIMPLEMENTATION_NOTE = "reimplementation"


@dataclass
class MethodOutput:
    estimates: Dict[str, Optional[float]]
    model: Optional[CyhmmModel] = None


class EstimationMethod(ABC):
    """Per-individual cycle-length estimator evaluated by ``benchmark``"""

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    def applies_to(self, kind: FeatureKind) -> bool:
        return True

    @abstractmethod
    def estimate(self, sim: SimulatedDataset) -> MethodOutput:
        pass


class OracleMethod(EstimationMethod):
    """Returns the true mean cycle length; a sanity row for the error table"""

    @property
    def name(self) -> str:
        return "oracle"

    def estimate(self, sim: SimulatedDataset) -> MethodOutput:
        return MethodOutput(dict(sim.true_lengths))


class BaselineMethod(EstimationMethod):
    def __init__(self, label: str, detector: Callable, kinds: Sequence[FeatureKind] = tuple(FeatureKind),
                 n_workers: Optional[int] = None, **options):
        self._label = label
        self.detector = detector
        self.kinds = tuple(kinds)
        self.n_workers = n_workers
        self.options = options

    @property
    def name(self) -> str:
        return self._label

    def applies_to(self, kind: FeatureKind) -> bool:
        return kind in self.kinds

    def estimate(self, sim: SimulatedDataset) -> MethodOutput:
        series = list(sim.dataset.series)
        found = ordered_map(lambda s: self.detector(s, **self.options).period, series, self.n_workers)
        return MethodOutput({s.id: p for s, p in zip(series, found)})


class CyhmmMethod(EstimationMethod):
    """Fit one CyHMM to the whole trial; estimate = mean decoded gap per individual"""

    def __init__(self, config: FitConfig, label: str = "cyhmm"):
        self.config = config
        self._label = label

    @property
    def name(self) -> str:
        return self._label

    def estimate(self, sim: SimulatedDataset) -> MethodOutput:
        ds = sim.dataset
        if ds.kind is FeatureKind.BINARY:
            ds = apply_binary_missing_rule(ds)
        result = em_fit(self.config, ds)
        report = cycle_lengths(result.model, ds, n_workers=self.config.n_workers)
        return MethodOutput({sid: c.mean for sid, c in report.per_individual.items()}, result.model)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    keep = np.isfinite(a) & np.isfinite(b)
    a, b = a[keep], b[keep]
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(stats.pearsonr(a, b)[0])


def variability_correlation(model: CyhmmModel, sim: SimulatedDataset) -> float:
    """Pearson r between inferred and ground-truth Delta over features where both are defined"""
    L = max(int(round(model.nominal_cycle_length())), 1)
    inferred = feature_trajectories(model, 2 * L).variability
    return _pearson(inferred, sim.true_variability())


@dataclass
class BenchmarkResult:
    per_individual: pd.DataFrame
    table: pd.DataFrame
    variability: pd.DataFrame
    trial_parameters: pd.DataFrame = field(default_factory=pd.DataFrame)

    def kind_table(self, reference: str = "cyhmm") -> pd.DataFrame:
        return kind_table(self.per_individual, reference)

    def mean_error(self, method: str, kind: Optional[str] = None) -> float:
        rows = self.per_individual[self.per_individual["method"] == method]
        if kind is not None:
            rows = rows[rows["kind"] == kind]
        return float(rows["error"].mean())

    def ablation_ratio(self, poisson: str = "cyhmm", geometric: str = "cyhmm_geometric",
                       kind: Optional[str] = "continuous") -> float:
        """Geometric-duration mean error over Poisson-duration mean error"""
        return self.mean_error(geometric, kind) / self.mean_error(poisson, kind)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "table": self.table.to_dict(orient="records"),
            "variability": self.variability.to_dict(orient="records"),
        }


def error_table(per_individual: pd.DataFrame, methods: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """methods x (mean_error, median_error, pearson_r, n_detected, n_undetected)"""
    methods = list(methods) if methods is not None else list(dict.fromkeys(per_individual["method"]))
    rows = []
    for method in methods:
        rows_m = per_individual[per_individual["method"] == method]
        detected = rows_m[rows_m["estimate"].notna()]
        rows.append({
            "method": method,
            "mean_error": float(detected["error"].mean()) if len(detected) else float("nan"),
            "median_error": float(detected["error"].median()) if len(detected) else float("nan"),
            "pearson_r": _pearson(detected["estimate"], detected["true_length"]),
            "n_detected": int(len(detected)),
            "n_undetected": int(len(rows_m) - len(detected)),
            "note": REIMPLEMENTATION_NOTE if method.startswith("partial_periodicity") else "",
        })
    return pd.DataFrame(rows).set_index("method")


def kind_table(per_individual: pd.DataFrame, reference: str = "cyhmm") -> pd.DataFrame:
    """Mean over trials of the per-trial mean error, split All / Binary / Continuous,
    with the reference method's relative improvement over each row"""
    per_trial = per_individual.groupby(["method", "kind", "trial"], sort=False)["error"].mean().reset_index()
    by_kind = per_trial.pivot_table(index="method", columns="kind", values="error", aggfunc="mean", sort=False)
    by_kind = by_kind.rename(columns=str.capitalize)
    by_kind.insert(0, "All", per_trial.groupby("method", sort=False)["error"].mean())
    if reference in by_kind.index:
        ref = by_kind.loc[reference, "All"]
        by_kind["improvement"] = (by_kind["All"] - ref) / by_kind["All"]
    return by_kind


def benchmark(datasets: Sequence[SimulatedDataset], methods: Sequence[EstimationMethod],
              trial_labels: Optional[Sequence[str]] = None) -> BenchmarkResult:
    """Per-individual error |estimate - true mean length| for every method and trial.

    Undetected individuals keep a row with NaN estimate and are counted, not scored.
    """
    if not methods:
        raise BaselineError("benchmark needs at least one method")
    if trial_labels is None:
        trial_labels = [f"trial_{i:03d}" for i in range(len(datasets))]
    rows, variability_rows = [], []
    for label, sim in zip(trial_labels, datasets):
        kind = sim.dataset.kind
        for method in methods:
            if not method.applies_to(kind):
                continue
            started = time.perf_counter()
            output = method.estimate(sim)
            logger.info(f"{label}: {method.name} done in {time.perf_counter() - started:.1f}s")
            for sid in sim.dataset.ids:
                truth = sim.true_lengths[sid]
                estimate = output.estimates.get(sid)
                rows.append({
                    "trial": label, "kind": kind.value, "method": method.name, "id": sid,
                    "true_length": truth,
                    "estimate": np.nan if estimate is None else float(estimate),
                    "error": np.nan if estimate is None else abs(float(estimate) - truth),
                })
            if output.model is not None:
                variability_rows.append({"trial": label, "kind": kind.value, "method": method.name,
                                         "correlation": variability_correlation(output.model, sim)})
    per_individual = pd.DataFrame(rows)
    table = error_table(per_individual, [m.name for m in methods if m.name in set(per_individual["method"])])
    variability = pd.DataFrame(variability_rows, columns=["trial", "kind", "method", "correlation"])
    return BenchmarkResult(per_individual, table, variability)


@dataclass
class BenchmarkGrid:
    """Randomized simulation trials; per-trial noise settings are drawn from the ranges"""
    trials_per_kind: int = 20
    kinds: Tuple[str, ...] = ("binary", "continuous")
    n_individuals: int = 100
    t_max_choices: Tuple[int, ...] = (90, 180)
    cycle_length: float = 30.0
    sigma_n: Tuple[float, float] = (5.0, 50.0)
    p_missing: Tuple[float, float] = (0.0, 0.9)
    sigma_b: Tuple[float, float] = (1.0, 10.0)
    sigma_w: Tuple[float, float] = (1.0, 10.0)
    n_features: int = 5
    value_scale: float = 50.0
    offset: Tuple[float, float] = (1.5, 2.5)
    bounds: Tuple[int, int] = DEFAULT_BOUNDS
    deltas: Tuple[int, ...] = (2, 5, 10)
    alpha: float = 0.01
    n_states: int = 4
    init_grid: Tuple[float, ...] = (15.0, 30.0, 45.0)
    max_iters: int = 100
    ablation: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("kinds", "t_max_choices", "sigma_n", "p_missing", "sigma_b", "sigma_w",
                     "offset", "bounds", "deltas", "init_grid"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.trials_per_kind < 1:
            raise ConfigError("trials_per_kind must be >= 1")
        for kind in self.kinds:
            FeatureKind.parse(kind)
        if not self.p_missing[1] < 1.0:
            raise ConfigError("p_missing range must stay below 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BenchmarkGrid":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown benchmark options: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def trials(self) -> List[Tuple[str, SimulationConfig]]:
        out = []
        for kind in self.kinds:
            for n in range(self.trials_per_kind):
                rng = np.random.default_rng([self.seed, len(out)])
                config = SimulationConfig(
                    n_individuals=self.n_individuals,
                    t_max=int(rng.choice(self.t_max_choices)),
                    cycle_length=self.cycle_length,
                    sigma_b=float(rng.uniform(*self.sigma_b)),
                    sigma_w=float(rng.uniform(*self.sigma_w)),
                    sigma_n=float(rng.uniform(*self.sigma_n)),
                    p_missing=float(rng.uniform(*self.p_missing)),
                    n_features=self.n_features,
                    kind=kind,
                    value_scale=self.value_scale,
                    offset=self.offset,
                    seed=int(rng.integers(0, 2 ** 31 - 1)),
                )
                out.append((f"{kind}_{n:03d}", config))
        return out

    def fit_config(self, duration_family: str = "poisson", n_workers: Optional[int] = None) -> FitConfig:
        return FitConfig(n_states=self.n_states, cycle_length=self.cycle_length, init_grid=list(self.init_grid),
                         max_iters=self.max_iters, seed=self.seed, duration_family=duration_family,
                         n_workers=n_workers)

    def methods(self, n_workers: Optional[int] = None) -> List[EstimationMethod]:
        methods: List[EstimationMethod] = [CyhmmMethod(self.fit_config(n_workers=n_workers))]
        if self.ablation:
            methods.append(CyhmmMethod(self.fit_config("geometric", n_workers), "cyhmm_geometric"))
        methods.append(BaselineMethod("fourier", fourier_period, n_workers=n_workers, bounds=self.bounds))
        methods.append(BaselineMethod("autocorrelation", autocorrelation_period, n_workers=n_workers,
                                      bounds=self.bounds))
        for delta in self.deltas:
            methods.append(BaselineMethod(f"partial_periodicity_d{delta}", partial_periodicity_period,
                                          kinds=(FeatureKind.BINARY,), n_workers=n_workers,
                                          delta=delta, alpha=self.alpha, bounds=self.bounds))
        return methods


def run_grid(grid: BenchmarkGrid, methods: Optional[Sequence[EstimationMethod]] = None,
             n_workers: Optional[int] = None) -> BenchmarkResult:
    trials = grid.trials()
    methods = list(methods) if methods is not None else grid.methods(n_workers)
    logger.info(f"Benchmark: {len(trials)} trials x {len(methods)} methods")
    sims = [simulate(config) for _, config in trials]
    result = benchmark(sims, methods, [label for label, _ in trials])
    result.trial_parameters = pd.DataFrame(
        [{"trial": label, **config.to_dict()} for label, config in trials])
    return result
