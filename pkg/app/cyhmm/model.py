"""
Cyclic explicit-duration HMM parameterization.

Each of the J states is split into substates (j, d) where d is the number of
timesteps left in the state. (j, d>0) counts down to (j, d-1); (j, 0) moves to
state j+1 (mod J) and draws its remaining time from that state's duration
distribution. Substate (j, d) is stored at flat index ``j * (d_max + 1) + d``.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse, stats
from scipy.special import logsumexp

from ..core.errors import ConfigError, DimensionMismatch, PartiallyMissingBinaryRow
from .dataset import FeatureKind, IndividualSeries

logger = logging.getLogger(__name__)

P_FLOOR = 1e-4
LAMBDA_FLOOR = 1e-2
SIGMA_FLOOR_FRACTION = 1e-3
D_MAX_MASS = 0.999
_LOG_2PI = math.log(2.0 * math.pi)


class DurationKind(Enum):
    POISSON = "poisson"
    GEOMETRIC = "geometric"


def _log_pmf(kind: DurationKind, param: float, d_max: int) -> np.ndarray:
    d = np.arange(d_max + 1)
    if kind is DurationKind.POISSON:
        raw = stats.poisson.logpmf(d, param)
    else:
        raw = math.log(param) + d * math.log1p(-param)
    return raw - logsumexp(raw)


@dataclass(frozen=True, eq=False)
class DurationFamily:
    """Per-state duration distributions truncated to {0..d_max} and renormalized.

    ``params`` holds lambda_j (Poisson) or p_j (geometric, pmf p(1-p)^d).
    """
    kind: DurationKind
    params: np.ndarray
    d_max: int
    log_pmf_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        kind = DurationKind(self.kind) if not isinstance(self.kind, DurationKind) else self.kind
        params = np.array(self.params, dtype=float).reshape(-1)
        if int(self.d_max) < 0:
            raise ConfigError(f"d_max must be >= 0, got {self.d_max}")
        if kind is DurationKind.POISSON:
            params = np.maximum(params, LAMBDA_FLOOR)
        else:
            params = np.clip(params, P_FLOOR, 1.0 - P_FLOOR)
        params.setflags(write=False)
        table = np.stack([_log_pmf(kind, p, int(self.d_max)) for p in params])
        table.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "d_max", int(self.d_max))
        object.__setattr__(self, "log_pmf_matrix", table)

    @property
    def J(self) -> int:
        return len(self.params)

    @property
    def pmf_matrix(self) -> np.ndarray:
        return np.exp(self.log_pmf_matrix)

    def mean_remaining(self) -> np.ndarray:
        """Mean of the truncated pmf per state (expected d on entry)"""
        return self.pmf_matrix @ np.arange(self.d_max + 1)

    def with_params(self, params: Sequence[float]) -> "DurationFamily":
        return DurationFamily(self.kind, np.asarray(params, dtype=float), self.d_max)


def duration_pmf(durations: DurationFamily, j: int) -> np.ndarray:
    """f_j(d) for d in 0..d_max, summing to 1"""
    if not 0 <= j < durations.J:
        raise DimensionMismatch(f"State index {j} outside 0..{durations.J - 1}")
    return np.exp(durations.log_pmf_matrix[j])


def select_d_max(max_lambda: float, max_cycle_length: float, J: int) -> int:
    """Truncation point for the duration pmfs.

    Smallest d with Poisson CDF >= 0.999 at ``max_lambda``, raised to at least
    ceil(2 * max_cycle_length / J) and capped at ceil(4 * max_cycle_length).
    """
    quantile = int(stats.poisson.ppf(D_MAX_MASS, max(max_lambda, LAMBDA_FLOOR)))
    floor = int(math.ceil(2.0 * max_cycle_length / J))
    cap = max(int(math.ceil(4.0 * max_cycle_length)), 1)
    return int(min(max(quantile, floor, 1), cap))


@dataclass(frozen=True, eq=False)
class EmissionParams:
    """Per-state observation model.

    Continuous: ``mu``, ``sigma``, ``p_obs`` are J x K. Binary: ``rate`` (E_jk) is
    J x K and ``p_obs`` (probability of logging anything) has length J.
    """
    kind: FeatureKind
    p_obs: np.ndarray
    mu: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    rate: Optional[np.ndarray] = None
    sigma_floor: Union[float, np.ndarray] = 1e-6

    def __post_init__(self):
        kind = FeatureKind.parse(self.kind)
        p_obs = np.clip(np.array(self.p_obs, dtype=float), P_FLOOR, 1.0 - P_FLOOR)
        if kind is FeatureKind.CONTINUOUS:
            if self.mu is None or self.sigma is None:
                raise ConfigError("Continuous emissions need mu and sigma")
            mu = np.array(self.mu, dtype=float)
            floor = np.broadcast_to(np.asarray(self.sigma_floor, dtype=float), (mu.shape[1],)).copy()
            sigma = np.maximum(np.array(self.sigma, dtype=float), floor[None, :])
            if mu.shape != sigma.shape or mu.shape != p_obs.shape or mu.ndim != 2:
                raise DimensionMismatch("mu, sigma and p_obs must all be J x K")
            arrays = {"mu": mu, "sigma": sigma, "rate": None, "sigma_floor": floor}
        else:
            if self.rate is None:
                raise ConfigError("Binary emissions need rate")
            rate = np.clip(np.array(self.rate, dtype=float), P_FLOOR, 1.0 - P_FLOOR)
            if rate.ndim != 2 or p_obs.shape != (rate.shape[0],):
                raise DimensionMismatch("rate must be J x K and p_obs length J")
            arrays = {"mu": None, "sigma": None, "rate": rate, "sigma_floor": np.zeros(rate.shape[1])}
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "p_obs", p_obs)
        for name, value in arrays.items():
            if value is not None:
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def J(self) -> int:
        return self.p_obs.shape[0]

    @property
    def K(self) -> int:
        return (self.mu if self.kind is FeatureKind.CONTINUOUS else self.rate).shape[1]

    def expected_values(self) -> np.ndarray:
        """E[feature k | state j, observed] as a J x K matrix"""
        return self.mu if self.kind is FeatureKind.CONTINUOUS else self.rate


@dataclass(frozen=True, eq=False)
class CyhmmModel:
    durations: DurationFamily
    emissions: EmissionParams
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.durations.J != self.emissions.J:
            raise DimensionMismatch(
                f"Duration params cover {self.durations.J} states, emissions {self.emissions.J}")
        names = tuple(self.feature_names) or tuple(f"feature_{k}" for k in range(self.emissions.K))
        if len(names) != self.emissions.K:
            raise DimensionMismatch("feature_names length must equal K")
        object.__setattr__(self, "feature_names", names)

    @property
    def J(self) -> int:
        return self.durations.J

    @property
    def K(self) -> int:
        return self.emissions.K

    @property
    def kind(self) -> FeatureKind:
        return self.emissions.kind

    @property
    def d_max(self) -> int:
        return self.durations.d_max

    @property
    def n_substates(self) -> int:
        return self.J * (self.d_max + 1)

    def initial_log_distribution(self) -> np.ndarray:
        """log pi(j, d) = log f_j(d) - log J, shape J x (d_max + 1)"""
        return self.durations.log_pmf_matrix - math.log(self.J)

    def expected_durations(self) -> np.ndarray:
        """Expected stay per state in timesteps (mean remaining time + 1)"""
        return self.durations.mean_remaining() + 1.0

    def expected_cycle_length(self) -> float:
        return float(self.expected_durations().sum())

    def nominal_cycle_length(self) -> float:
        """sum_j (lambda_j + 1) for Poisson, the untruncated analogue for geometric"""
        params = self.durations.params
        if self.durations.kind is DurationKind.POISSON:
            return float(np.sum(params + 1.0))
        return float(np.sum(1.0 / params))

    def transition_matrix(self) -> sparse.csr_matrix:
        return build_expanded_topology(self).to_sparse()

    def replace(self, durations: Optional[DurationFamily] = None,
                emissions: Optional[EmissionParams] = None) -> "CyhmmModel":
        return CyhmmModel(durations or self.durations, emissions or self.emissions, self.feature_names)

    def sample(self, T: int, rng: np.random.Generator, series_id: str = "sample") -> Tuple[IndividualSeries, List[Tuple[int, int]]]:
        """Draw one series of length T from the model; returns it with its substate path"""
        D = self.d_max + 1
        pmf = self.durations.pmf_matrix
        flat = rng.choice(self.n_substates, p=np.exp(self.initial_log_distribution()).reshape(-1))
        j, d = divmod(int(flat), D)
        path = []
        for _ in range(T):
            path.append((j, d))
            if d > 0:
                d -= 1
            else:
                j = (j + 1) % self.J
                d = int(rng.choice(D, p=pmf[j]))
        states = np.array([p[0] for p in path])
        em = self.emissions
        if self.kind is FeatureKind.CONTINUOUS:
            observed = rng.random((T, self.K)) < em.p_obs[states]
            values = rng.normal(em.mu[states], em.sigma[states])
        else:
            logged = rng.random(T) < em.p_obs[states]
            observed = np.repeat(logged[:, None], self.K, axis=1)
            values = (rng.random((T, self.K)) < em.rate[states]).astype(float)
        return IndividualSeries(series_id, np.where(observed, values, np.nan), observed), path

    def to_dict(self) -> Dict[str, Any]:
        em = self.emissions
        emissions: Dict[str, Any] = {"p_obs": em.p_obs.tolist()}
        if self.kind is FeatureKind.CONTINUOUS:
            emissions.update(mu=em.mu.tolist(), sigma=em.sigma.tolist(), sigma_floor=em.sigma_floor.tolist())
        else:
            emissions.update(rate=em.rate.tolist())
        return {
            "J": self.J,
            "K": self.K,
            "kind": self.kind.value,
            "d_max": self.d_max,
            "feature_names": list(self.feature_names),
            "durations": {"family": self.durations.kind.value, "params": self.durations.params.tolist()},
            "emissions": emissions,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CyhmmModel":
        try:
            kind = FeatureKind.parse(data["kind"])
            durations = DurationFamily(DurationKind(data["durations"]["family"]),
                                       data["durations"]["params"], int(data["d_max"]))
            em = data["emissions"]
            if kind is FeatureKind.CONTINUOUS:
                emissions = EmissionParams(kind, em["p_obs"], mu=em["mu"], sigma=em["sigma"],
                                           sigma_floor=em.get("sigma_floor", 1e-6))
            else:
                emissions = EmissionParams(kind, em["p_obs"], rate=em["rate"])
        except KeyError as e:
            raise ConfigError(f"Model document is missing field {e}")
        model = cls(durations, emissions, tuple(data.get("feature_names", ())))
        if model.J != int(data.get("J", model.J)) or model.K != int(data.get("K", model.K)):
            raise DimensionMismatch("Declared J/K do not match parameter shapes")
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "CyhmmModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def emission_logprob_matrix(model: CyhmmModel, series: IndividualSeries) -> np.ndarray:
    """log P(row_t | state j) for every timestep, shape T x J"""
    if series.K != model.K:
        raise DimensionMismatch(f"Series {series.id} has {series.K} features, model expects {model.K}")
    em = model.emissions
    x = series.filled()
    o = series.observed
    if model.kind is FeatureKind.CONTINUOUS:
        z = (x[:, None, :] - em.mu[None]) / em.sigma[None]
        log_density = -0.5 * _LOG_2PI - np.log(em.sigma)[None] - 0.5 * z ** 2
        present = np.log(em.p_obs)[None] + log_density
        absent = np.broadcast_to(np.log1p(-em.p_obs)[None], present.shape)
        return np.where(o[:, None, :], present, absent).sum(axis=2)

    logged = o.any(axis=1)
    if np.any(logged & ~o.all(axis=1)):
        raise PartiallyMissingBinaryRow(
            f"Series {series.id} has partially missing binary rows; apply the binary missing rule first")
    bernoulli = x @ np.log(em.rate).T + (1.0 - x) @ np.log1p(-em.rate).T
    return np.where(logged[:, None], np.log(em.p_obs)[None] + bernoulli, np.log1p(-em.p_obs)[None])


def emission_logprob(model: CyhmmModel, state: int, values: Sequence[float], observed: Sequence[bool]) -> float:
    """Log-probability of one row under state ``state``"""
    values = np.asarray(values, dtype=float).reshape(1, -1)
    observed = np.asarray(observed, dtype=bool).reshape(1, -1)
    if values.shape[1] != model.K or observed.shape != values.shape:
        raise DimensionMismatch(f"Row must have {model.K} values and flags")
    row = IndividualSeries("row", np.where(observed, values, np.nan), observed)
    return float(emission_logprob_matrix(model, row)[0, state])


@dataclass(frozen=True)
class ExpandedTopology:
    """Successor lists of the substate chain"""
    J: int
    d_max: int
    successors: Tuple[Tuple[int, ...], ...]
    probabilities: Tuple[Tuple[float, ...], ...]

    @property
    def n_substates(self) -> int:
        return len(self.successors)

    @property
    def n_transitions(self) -> int:
        return sum(len(s) for s in self.successors)

    def index(self, j: int, d: int) -> int:
        return j * (self.d_max + 1) + d

    def substate(self, index: int) -> Tuple[int, int]:
        return divmod(index, self.d_max + 1)

    def to_sparse(self) -> sparse.csr_matrix:
        rows, cols, data = [], [], []
        for i, (succ, prob) in enumerate(zip(self.successors, self.probabilities)):
            rows.extend([i] * len(succ))
            cols.extend(succ)
            data.extend(prob)
        n = self.n_substates
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def build_expanded_topology(model: CyhmmModel) -> ExpandedTopology:
    """Countdown edges (j,d)->(j,d-1) plus fan-outs (j,0)->(j+1,d') weighted by f_{j+1}.

    Fan-out entries are kept even where f_{j+1}(d') underflows so the edge count
    is always J*d_max + J*(d_max+1).
    """
    J, D = model.J, model.d_max + 1
    pmf = model.durations.pmf_matrix
    successors, probabilities = [], []
    for j in range(J):
        for d in range(D):
            if d > 0:
                successors.append((j * D + d - 1,))
                probabilities.append((1.0,))
            else:
                nxt = (j + 1) % J
                successors.append(tuple(nxt * D + e for e in range(D)))
                probabilities.append(tuple(float(p) for p in pmf[nxt]))
    return ExpandedTopology(J, model.d_max, tuple(successors), tuple(probabilities))
