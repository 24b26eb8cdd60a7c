import numpy as np
import pytest

from app.core.errors import BaselineError
from app.cyhmm.baselines import (
    PeriodEstimate,
    autocorrelation,
    autocorrelation_period,
    fourier_period,
    gap_window_probability,
    partial_periodicity_period,
    significant_periods,
)
from app.cyhmm.dataset import IndividualSeries


def _series(columns, sid="s"):
    values = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    return IndividualSeries(sid, values, ~np.isnan(values))


def test_period_estimate_filters_and_takes_median():
    estimate = PeriodEstimate("x", [60.0, None, 10.0, 12.0])

    assert estimate.period == 11.0
    assert estimate.detected
    assert not PeriodEstimate("x", [None, 3.0]).detected


def test_fourier_finds_exact_bin():
    t = np.arange(100)
    estimate = fourier_period(_series([np.sin(2 * np.pi * t / 10)]))

    assert estimate.period == pytest.approx(10.0)
    assert estimate.method == "fourier"


def test_fourier_constant_signal_is_undetected():
    assert fourier_period(_series([np.full(100, 5.0)])).period is None


def test_fourier_median_over_features():
    rng = np.random.default_rng(0)
    t = np.arange(120)
    signal = np.sin(2 * np.pi * t / 10)
    estimate = fourier_period(_series([signal, 2 * signal + 1, rng.normal(size=120)]))

    assert estimate.feature_periods[:2] == pytest.approx([10.0, 10.0])
    assert estimate.period == pytest.approx(10.0)


def test_fourier_tolerates_missing_cells():
    t = np.arange(150)
    x = np.sin(2 * np.pi * t / 15) + 3.0
    x[::4] = np.nan

    assert fourier_period(_series([x])).period == pytest.approx(15.0)


def test_fourier_needs_two_minimal_periods():
    assert fourier_period(_series([np.sin(np.arange(9))])).period is None
    with pytest.raises(BaselineError):
        fourier_period(_series([np.zeros(20)]), bounds=(10, 5))


def test_autocorrelation_of_square_wave():
    t = np.arange(140)
    wave = (t % 7 < 3).astype(float)
    estimate = autocorrelation_period(_series([wave]))

    assert estimate.period == 7.0


def test_autocorrelation_is_scale_and_shift_invariant():
    rng = np.random.default_rng(3)
    x = np.sin(2 * np.pi * np.arange(200) / 23) + 0.3 * rng.normal(size=200)
    lags = np.arange(5, 51)
    observed = np.ones(200, dtype=bool)

    assert np.allclose(autocorrelation(x, observed, lags), autocorrelation(5 * x - 2, observed, lags))
    assert autocorrelation_period(_series([x])).period == pytest.approx(23.0, abs=1.0)


def test_autocorrelation_white_noise_stays_in_bounds():
    rng = np.random.default_rng(4)
    estimate = autocorrelation_period(_series([rng.normal(size=200)]))

    assert 5 <= estimate.period <= 50


def test_autocorrelation_without_overlap_is_undetected():
    x = np.full(60, np.nan)
    x[[0, 10, 33]] = [1.0, 2.0, 0.5]

    assert autocorrelation_period(_series([x])).period is None


def test_gap_window_probability():
    assert gap_window_probability(0.5, 1, 1) == pytest.approx(0.5)
    assert gap_window_probability(0.5, 1, 2) == pytest.approx(0.75)


def test_exact_periodic_events_are_detected():
    x = np.zeros(240)
    x[::12] = 1.0
    estimate = partial_periodicity_period(_series([x]), delta=2)

    assert estimate.period == 12.0
    assert estimate.method == "partial_periodicity_d2"
    events = np.flatnonzero(x)
    assert significant_periods(events, len(events) / 240, 2, 0.01, (5, 50)) == [10, 11, 12, 13, 14]


def test_memoryless_events_are_rarely_significant():
    undetected = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = (rng.random(200) < 0.1).astype(float)
        if not partial_periodicity_period(_series([x]), delta=2, alpha=0.01).detected:
            undetected += 1

    assert undetected >= 95


def test_partial_periodicity_skips_featureless_columns():
    quiet = np.zeros(100)
    periodic = np.zeros(100)
    periodic[::10] = 1.0
    estimate = partial_periodicity_period(_series([quiet, periodic]))

    assert estimate.feature_periods[0] is None
    assert estimate.period == pytest.approx(10.0)


@pytest.mark.parametrize("kwargs", [{"delta": -1}, {"alpha": 0.0}, {"alpha": 1.5}])
def test_partial_periodicity_validation(kwargs):
    x = np.zeros(50)
    x[::7] = 1.0
    with pytest.raises(BaselineError):
        partial_periodicity_period(_series([x]), **kwargs)


def test_partial_periodicity_requires_binary_series():
    with pytest.raises(BaselineError):
        partial_periodicity_period(_series([np.linspace(0, 1, 30)]))
