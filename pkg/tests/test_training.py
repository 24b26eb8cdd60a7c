import numpy as np
import pytest

from app.core.errors import ConfigError, DimensionMismatch, KindMismatch
from app.cyhmm.dataset import FeatureKind, IndividualSeries, TimeSeriesDataset
from app.cyhmm.model import DurationFamily, DurationKind
from app.cyhmm.training import (
    MONOTONE_SLACK,
    FitConfig,
    em_fit,
    expectation,
    fit_duration_param,
    initialize,
    run_em,
    select_state_count,
    state_count_scores,
)

from tests.factories import binary_cycle_model, sample_dataset, two_state_model


def _monotone(trace):
    return all(b - a >= -MONOTONE_SLACK * abs(a) for a, b in zip(trace, trace[1:]))


@pytest.mark.parametrize("options", [
    {"n_states": 0},
    {"max_iters": 0},
    {"rel_tol": 0.0},
    {"duration_family": "weibull"},
    {"n_states": 4, "init_grid": [3, 30]},
])
def test_fit_config_validation(options):
    with pytest.raises(ConfigError):
        FitConfig(**options)


def test_fit_config_from_dict():
    config = FitConfig.from_dict({"n_states": 3, "init_grid": [15, 30]})

    assert config.grid == [15.0, 30.0]
    assert FitConfig(cycle_length=28).grid == [28.0]
    with pytest.raises(ConfigError):
        FitConfig.from_dict({"n_state": 3})


@pytest.mark.parametrize("kind", [DurationKind.POISSON, DurationKind.GEOMETRIC])
@pytest.mark.parametrize("mean", [0.5, 3.0, 5.5])
def test_fit_duration_param_matches_truncated_mean(kind, mean):
    d_max = 12
    param = fit_duration_param(kind, mean, d_max)

    family = DurationFamily(kind, [param], d_max)
    assert family.mean_remaining()[0] == pytest.approx(mean, abs=1e-8)


def test_fit_duration_param_clamps_extremes():
    assert fit_duration_param(DurationKind.POISSON, 0.0, 10) == pytest.approx(1e-2)
    assert fit_duration_param(DurationKind.GEOMETRIC, 10.0, 10) == pytest.approx(1e-4)


def test_initialize_is_seeded(planted_dataset):
    config = FitConfig(n_states=2, cycle_length=10, seed=3)
    a = initialize(config, planted_dataset, 10)
    b = initialize(config, planted_dataset, 10)

    assert a.to_dict() == b.to_dict()
    assert np.allclose(a.durations.params, 4.0)
    with pytest.raises(ConfigError):
        initialize(config, planted_dataset, 1)


def test_em_is_monotone_over_sampled_fits():
    for seed in range(4):
        truth = two_state_model(lam=2.0 + seed)
        ds = sample_dataset(truth, N=12, T=50, seed=seed)
        result = em_fit(FitConfig(n_states=2, cycle_length=8, max_iters=25, seed=seed), ds)
        assert _monotone(result.loglik_trace)

    ds = sample_dataset(binary_cycle_model(), N=15, T=60, seed=9)
    result = em_fit(FitConfig(n_states=3, cycle_length=12, max_iters=25), ds)
    assert _monotone(result.loglik_trace)


def test_em_recovers_planted_parameters(planted_model):
    ds = sample_dataset(planted_model, N=200, T=100, seed=3)
    config = FitConfig(n_states=2, init_grid=[10], max_iters=200, rel_tol=1e-6)
    result = em_fit(config, ds)
    model = result.model
    values, _ = ds.stacked()
    tolerance = 0.1 * np.nanstd(values, axis=0)

    assert result.converged
    assert np.allclose(model.durations.params, 4.0, rtol=0.1)
    assert np.all(np.abs(np.sort(model.emissions.mu[:, 0]) - [0.0, 4.0]) <= tolerance[0])
    assert np.all(np.abs(np.sort(model.emissions.mu[:, 1]) - [-4.0, 0.0]) <= tolerance[1])
    assert np.allclose(model.emissions.p_obs, 0.9, atol=0.03)


def test_fit_does_not_depend_on_individual_order(planted_dataset):
    config = FitConfig(n_states=2, cycle_length=10, max_iters=10, rel_tol=1e-12, n_workers=1)
    order = np.random.default_rng(5).permutation(planted_dataset.N)
    a = em_fit(config, planted_dataset)
    b = em_fit(config, planted_dataset.subset(order))

    assert len(a.loglik_trace) == len(b.loglik_trace)
    assert np.allclose(a.loglik_trace, b.loglik_trace, rtol=1e-6)
    assert np.allclose(a.model.durations.params, b.model.durations.params, rtol=1e-6)
    assert np.allclose(a.model.emissions.mu, b.model.emissions.mu, rtol=1e-6, atol=1e-9)
    assert np.allclose(a.model.emissions.sigma, b.model.emissions.sigma, rtol=1e-6)


def test_result_does_not_depend_on_worker_count(planted_dataset):
    config = FitConfig(n_states=2, cycle_length=10, max_iters=8, chunk_size=4)
    one = em_fit(config.replace(n_workers=1), planted_dataset)
    four = em_fit(config.replace(n_workers=4), planted_dataset)

    assert one.loglik_trace == four.loglik_trace
    assert np.array_equal(one.model.durations.params, four.model.durations.params)
    assert np.array_equal(one.model.emissions.mu, four.model.emissions.mu)


def test_chunk_stats_sum_to_whole_population(planted_model, planted_dataset):
    whole = expectation(planted_model, planted_dataset, FitConfig(n_states=2, chunk_size=1000, n_workers=1))
    split = expectation(planted_model, planted_dataset, FitConfig(n_states=2, chunk_size=7, n_workers=3))

    assert split.loglik == pytest.approx(whole.loglik, rel=1e-12)
    assert np.allclose(split.entries, whole.entries)
    assert np.allclose(split.sum_x2, whole.sum_x2)


def test_init_grid_keeps_best_start(planted_dataset):
    config = FitConfig(n_states=2, init_grid=[6, 10, 30], max_iters=15)
    result = em_fit(config, planted_dataset)

    assert set(result.init_logliks) == {6.0, 10.0, 30.0}
    assert result.loglik == max(result.init_logliks.values())
    assert result.init_logliks[result.chosen_init] == result.loglik


def test_single_iteration_returns_starting_model(planted_model, planted_dataset):
    result = run_em(planted_model, planted_dataset, FitConfig(n_states=2), max_iters=1)

    assert len(result.loglik_trace) == 1
    assert result.model is planted_model


def test_warm_start(planted_model, planted_dataset):
    result = em_fit(FitConfig(n_states=2, max_iters=5), planted_dataset, initial_model=planted_model)

    assert result.chosen_init is None
    assert _monotone(result.loglik_trace)


def test_incompatible_model_is_rejected(planted_dataset):
    config = FitConfig(n_states=3)
    with pytest.raises(KindMismatch):
        run_em(binary_cycle_model(), planted_dataset, config)

    single = [IndividualSeries(s.id, s.values[:, :1], s.observed[:, :1]) for s in planted_dataset.series]
    narrow = TimeSeriesDataset(tuple(single), ("x",), FeatureKind.CONTINUOUS)
    with pytest.raises(DimensionMismatch):
        run_em(two_state_model(), narrow, FitConfig(n_states=2))


def test_state_count_selection(planted_dataset):
    config = FitConfig(cycle_length=12, max_iters=15)
    scores = state_count_scores(planted_dataset, [1, 2], folds=3, config=config)

    assert scores["n_states"].tolist() == [1, 2]
    assert all(len(s) == 3 for s in scores["fold_scores"])
    assert select_state_count(planted_dataset, [1, 2], folds=3, config=config) == 2
    assert select_state_count(planted_dataset, [5], folds=3, config=config) == 5

    with pytest.raises(ConfigError):
        state_count_scores(planted_dataset, [1, 2], folds=1, config=config)
