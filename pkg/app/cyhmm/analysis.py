"""
Post-fit cycle characterization: decoded cycle lengths, predicted feature
trajectories and the variability ranking derived from them.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import CyhmmError, DimensionMismatch, KindMismatch
from ..utils.parallel import ordered_map
from .dataset import FeatureKind, TimeSeriesDataset
from .inference import ViterbiPath, viterbi
from .model import CyhmmModel

logger = logging.getLogger(__name__)

UNDEFINED_MEAN = 1e-12


@dataclass
class IndividualCycles:
    gaps: List[int]

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.gaps)) if self.gaps else None

    @property
    def median(self) -> Optional[float]:
        return float(np.median(self.gaps)) if self.gaps else None

    @property
    def mode(self) -> Optional[int]:
        return int(pd.Series(self.gaps).mode().iloc[0]) if self.gaps else None


@dataclass
class CycleLengthReport:
    state_index: int
    per_individual: Dict[str, IndividualCycles]
    state_occupancy: np.ndarray
    expected_durations: np.ndarray

    @property
    def histogram(self) -> Dict[int, int]:
        """Counts of per-individual modal lengths"""
        modes = [c.mode for c in self.per_individual.values() if c.gaps]
        counts = pd.Series(modes, dtype=int).value_counts().sort_index()
        return {int(k): int(v) for k, v in counts.items()}

    @property
    def population_mode(self) -> Optional[int]:
        histogram = self.histogram
        if not histogram:
            return None
        top = max(histogram.values())
        return min(length for length, count in histogram.items() if count == top)

    def to_frame(self) -> pd.DataFrame:
        rows = [{"id": sid, "n_gaps": len(c.gaps), "mean": c.mean, "median": c.median, "mode": c.mode,
                 "gaps": " ".join(str(g) for g in c.gaps)}
                for sid, c in self.per_individual.items()]
        return pd.DataFrame(rows, columns=["id", "n_gaps", "mean", "median", "mode", "gaps"])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "state_index": self.state_index,
            "population_mode": self.population_mode,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "state_occupancy": self.state_occupancy.tolist(),
            "expected_durations": self.expected_durations.tolist(),
            "per_individual": {
                sid: {"gaps": c.gaps, "mean": c.mean, "median": c.median, "mode": c.mode}
                for sid, c in self.per_individual.items()
            },
        }


def decode_all(model: CyhmmModel, ds: TimeSeriesDataset, n_workers: Optional[int] = None) -> List[ViterbiPath]:
    if model.kind is not ds.kind:
        raise KindMismatch(f"Model is {model.kind.value}, dataset is {ds.kind.value}")
    return ordered_map(lambda s: viterbi(model, s), list(ds.series), n_workers)


def entry_times(path: ViterbiPath, J: int, state_index: int = 0) -> List[int]:
    """Timesteps at which the path enters ``state_index`` from the previous state's d=0"""
    previous = (state_index - 1) % J
    times = []
    for t in range(1, len(path.path)):
        (pj, pd_), (j, _) = path.path[t - 1], path.path[t]
        if j == state_index and pj == previous and pd_ == 0:
            times.append(t)
    return times


def cycle_lengths(model: CyhmmModel, ds: TimeSeriesDataset, state_index: int = 0,
                  n_workers: Optional[int] = None,
                  paths: Optional[Sequence[ViterbiPath]] = None) -> CycleLengthReport:
    """Gaps between successive decoded entries into ``state_index`` (state 1 by default)"""
    if not 0 <= state_index < model.J:
        raise DimensionMismatch(f"state_index {state_index} outside 0..{model.J - 1}")
    if paths is None:
        paths = decode_all(model, ds, n_workers)
    per_individual = {}
    occupancy = np.zeros(model.J)
    for s, path in zip(ds.series, paths):
        times = entry_times(path, model.J, state_index)
        per_individual[s.id] = IndividualCycles([int(g) for g in np.diff(times)])
        occupancy += np.bincount(path.states, minlength=model.J)
    report = CycleLengthReport(state_index, per_individual, occupancy / occupancy.sum(),
                               model.expected_durations())
    logger.info(f"Decoded {len(paths)} series; population modal cycle length {report.population_mode}")
    return report


@dataclass
class TrajectoryReport:
    """Predicted expected feature values after a cycle start.

    ``missingness`` is the probability that nothing is logged (binary, one
    column) or that each feature is missing (continuous, K columns).
    """
    feature_names: Tuple[str, ...]
    values: np.ndarray  # horizon x K
    state_probs: np.ndarray  # horizon x J
    missingness: np.ndarray
    missingness_names: Tuple[str, ...]
    cycle_length_L: int
    variability: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cycle_length_L = int(min(max(self.cycle_length_L, 1), self.horizon))
        self.variability = variability_vector(self.values, self.cycle_length_L)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def to_frame(self) -> pd.DataFrame:
        """Tidy ``t, feature, expected_value`` table"""
        wide = pd.DataFrame(np.hstack([self.values, self.missingness]),
                            columns=list(self.feature_names) + list(self.missingness_names))
        wide.insert(0, "t", np.arange(self.horizon))
        return wide.melt(id_vars="t", var_name="feature", value_name="expected_value")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "horizon": self.horizon,
            "cycle_length_L": self.cycle_length_L,
            "feature_names": list(self.feature_names),
            "values": self.values.tolist(),
            "missingness_names": list(self.missingness_names),
            "missingness": self.missingness.tolist(),
            "state_probs": self.state_probs.tolist(),
            "variability": [None if np.isnan(v) else float(v) for v in self.variability],
        }


def propagate(model: CyhmmModel, horizon: int) -> np.ndarray:
    """Substate distribution over ``horizon`` steps from the modal start substate
    of state 1, shape horizon x J x (d_max + 1)"""
    pmf = model.durations.pmf_matrix
    p = np.zeros((model.J, model.d_max + 1))
    p[0, int(np.argmax(pmf[0]))] = 1.0
    out = np.empty((horizon,) + p.shape)
    for t in range(horizon):
        out[t] = p
        nxt = np.zeros_like(p)
        nxt[:, :-1] = p[:, 1:]
        nxt += np.roll(p[:, 0], 1)[:, None] * pmf
        p = nxt
    return out


def feature_trajectories(model: CyhmmModel, horizon: int) -> TrajectoryReport:
    if horizon < 1:
        raise CyhmmError(f"horizon must be >= 1, got {horizon}")
    state_probs = propagate(model, horizon).sum(axis=2)
    em = model.emissions
    values = state_probs @ em.expected_values()
    if model.kind is FeatureKind.BINARY:
        missingness = (state_probs @ (1.0 - em.p_obs))[:, None]
        names = ("no_features_logged",)
    else:
        missingness = state_probs @ (1.0 - em.p_obs)
        names = tuple(f"missing:{name}" for name in model.feature_names)
    L = int(round(model.nominal_cycle_length()))
    return TrajectoryReport(model.feature_names, values, state_probs, missingness, names, L)


def variability_vector(values: np.ndarray, L: int) -> np.ndarray:
    """Delta_k = mean_t |(V_tk - mu_k) / mu_k| over the first L steps; NaN when mu_k ~ 0"""
    window = np.asarray(values, dtype=float)[:L]
    mu = window.mean(axis=0)
    defined = np.abs(mu) >= UNDEFINED_MEAN
    safe = np.where(defined, mu, 1.0)
    delta = np.abs((window - safe) / safe).mean(axis=0)
    return np.where(defined, delta, np.nan)


def feature_variability(report: TrajectoryReport) -> List[Tuple[str, float]]:
    """Features ranked by Delta_k, descending; ties keep feature order"""
    ranked = []
    for k, (name, delta) in enumerate(zip(report.feature_names, report.variability)):
        if np.isnan(delta):
            logger.warning(f"Feature {name} has near-zero trajectory mean; variability undefined")
            continue
        ranked.append((k, name, float(delta)))
    ranked.sort(key=lambda item: (-item[2], item[0]))
    return [(name, delta) for _, name, delta in ranked]
