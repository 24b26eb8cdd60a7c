"""
Classical per-individual period detectors used as comparison methods.

Each detector estimates a period per feature, keeps only periods inside the
filter bounds and reports the median across features. An individual with no
in-bounds period on any feature is undetected (``period is None``).
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from ..core.errors import BaselineError
from .dataset import IndividualSeries

logger = logging.getLogger(__name__)

Bounds = Tuple[int, int]

DEFAULT_BOUNDS: Bounds = (5, 50)
MIN_OVERLAP = 5
FLAT_SPECTRUM = 1e-9
MIN_EXPECTED = 1.0


@dataclass
class PeriodEstimate:
    method: str
    feature_periods: List[Optional[float]]
    bounds: Bounds = DEFAULT_BOUNDS
    period: Optional[float] = field(init=False)

    def __post_init__(self):
        low, high = self.bounds
        kept = [p for p in self.feature_periods if p is not None and low <= p <= high]
        self.period = float(np.median(kept)) if kept else None

    @property
    def detected(self) -> bool:
        return self.period is not None


def _check_bounds(bounds: Bounds) -> Bounds:
    low, high = int(bounds[0]), int(bounds[1])
    if low < 2 or high < low:
        raise BaselineError(f"Invalid period bounds ({low}, {high})")
    return low, high


def _feature_fourier(x: np.ndarray, observed: np.ndarray, bounds: Bounds) -> Optional[float]:
    if observed.sum() < 2:
        return None
    # mean imputation; DFT needs a complete grid
    filled = np.where(observed, x, x[observed].mean())
    centred = filled - filled.mean()
    amplitude = np.abs(np.fft.rfft(centred))[1:]
    freqs = np.fft.rfftfreq(len(x))[1:]
    periods = 1.0 / freqs
    in_bounds = (periods >= bounds[0]) & (periods <= bounds[1])
    if not in_bounds.any():
        return None
    scale = max(float(np.abs(filled).max()), 1.0) * np.sqrt(len(x))
    candidates = np.where(in_bounds, amplitude, -np.inf)
    best = int(np.argmax(candidates))
    if amplitude[best] <= FLAT_SPECTRUM * scale:
        return None
    return float(periods[best])


def fourier_period(series: IndividualSeries, bounds: Bounds = DEFAULT_BOUNDS) -> PeriodEstimate:
    """Period of the largest-amplitude in-bounds DFT peak, per feature"""
    bounds = _check_bounds(bounds)
    if series.T < 2 * bounds[0]:
        return PeriodEstimate("fourier", [None] * series.K, bounds)
    periods = [_feature_fourier(series.values[:, k], series.observed[:, k], bounds) for k in range(series.K)]
    return PeriodEstimate("fourier", periods, bounds)


def autocorrelation(x: np.ndarray, observed: np.ndarray, lags: np.ndarray,
                    min_overlap: int = MIN_OVERLAP) -> np.ndarray:
    """Sample autocorrelation on pairwise-complete observations.

    Products are centred on the mean of all observed cells and divided by
    n_observed * variance, so longer lags are shrunk as in the usual biased
    estimator. Lags with fewer than ``min_overlap`` complete pairs are NaN.
    """
    n_obs = int(observed.sum())
    out = np.full(len(lags), np.nan)
    if n_obs < 2:
        return out
    mu = x[observed].mean()
    var = x[observed].var()
    if var <= 0:
        return out
    centred = np.where(observed, x - mu, 0.0)
    for i, lag in enumerate(lags):
        if lag >= len(x):
            continue
        both = observed[:-lag] & observed[lag:]
        if both.sum() < min_overlap:
            continue
        out[i] = np.sum(centred[:-lag] * centred[lag:]) / (n_obs * var)
    return out


def autocorrelation_period(series: IndividualSeries, bounds: Bounds = DEFAULT_BOUNDS,
                           min_overlap: int = MIN_OVERLAP) -> PeriodEstimate:
    """Lag with the largest autocorrelation in bounds, per feature; first lag wins ties"""
    bounds = _check_bounds(bounds)
    lags = np.arange(bounds[0], bounds[1] + 1)
    periods: List[Optional[float]] = []
    for k in range(series.K):
        acf = autocorrelation(series.values[:, k], series.observed[:, k], lags, min_overlap)
        periods.append(None if np.all(np.isnan(acf)) else float(lags[int(np.nanargmax(acf))]))
    return PeriodEstimate("autocorrelation", periods, bounds)


def gap_window_probability(rate: float, low: int, high: int) -> float:
    """P(low <= gap <= high) when events occur independently with probability ``rate`` per step"""
    return float(stats.geom.cdf(high, rate) - stats.geom.cdf(low - 1, rate))


def significant_periods(events: np.ndarray, rate: float, delta: int, alpha: float,
                        bounds: Bounds) -> List[int]:
    """Candidate periods whose in-tolerance gap count exceeds the memoryless expectation.

    For period p the count of inter-event gaps in [p - delta, p + delta] is
    compared to its binomial expectation with a continuity-corrected one degree
    of freedom chi-square statistic; alpha is Bonferroni-corrected over the
    candidates. Windows expecting fewer than MIN_EXPECTED gaps are not tested.
    """
    gaps = np.diff(events)
    n_gaps = len(gaps)
    candidates = range(bounds[0], bounds[1] + 1)
    threshold = alpha / len(candidates)
    found = []
    for p in candidates:
        low, high = max(1, p - delta), p + delta
        prob = gap_window_probability(rate, low, high)
        expected = n_gaps * prob
        if not 0.0 < prob < 1.0 or expected < MIN_EXPECTED:
            continue
        hits = int(np.sum((gaps >= low) & (gaps <= high)))
        statistic = max(abs(hits - expected) - 0.5, 0.0) ** 2 / (expected * (1.0 - prob))
        if hits > expected and stats.chi2.sf(statistic, df=1) < threshold:
            found.append(p)
    return found


def partial_periodicity_period(series: IndividualSeries, delta: int = 2, alpha: float = 0.01,
                               bounds: Bounds = DEFAULT_BOUNDS) -> PeriodEstimate:
    """Chi-square partial-periodicity test on binary event sequences (reimplementation)"""
    bounds = _check_bounds(bounds)
    if delta < 0:
        raise BaselineError(f"delta must be >= 0, got {delta}")
    if not 0.0 < alpha < 1.0:
        raise BaselineError(f"alpha must lie in (0, 1), got {alpha}")
    cells = series.values[series.observed]
    if not np.all((cells == 0.0) | (cells == 1.0)):
        raise BaselineError(f"Series {series.id} is not binary")

    periods: List[Optional[float]] = []
    for k in range(series.K):
        observed = series.observed[:, k]
        events = np.flatnonzero(observed & (np.nan_to_num(series.values[:, k]) == 1.0))
        rate = len(events) / max(int(observed.sum()), 1)
        if len(events) < 2 or rate >= 1.0:
            periods.append(None)
            continue
        found = significant_periods(events, rate, delta, alpha, bounds)
        periods.append(float(np.median(found)) if found else None)
    return PeriodEstimate(f"partial_periodicity_d{delta}", periods, bounds)
