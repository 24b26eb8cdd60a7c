import numpy as np
import pandas as pd
import pytest

from app.core.errors import BaselineError, ConfigError
from app.cyhmm.baselines import fourier_period
from app.cyhmm.benchmark import (
    BaselineMethod,
    BenchmarkGrid,
    BenchmarkResult,
    CyhmmMethod,
    EstimationMethod,
    MethodOutput,
    OracleMethod,
    benchmark,
    error_table,
    kind_table,
    run_grid,
)
from app.cyhmm.dataset import FeatureKind
from app.cyhmm.simulation import SimulationConfig, simulate
from app.cyhmm.training import FitConfig


class HalfMethod(EstimationMethod):
    """Estimates every individual at half its true length"""

    @property
    def name(self):
        return "half"

    def estimate(self, sim):
        return MethodOutput({sid: v / 2 for sid, v in sim.true_lengths.items()})


class SilentMethod(EstimationMethod):
    @property
    def name(self):
        return "silent"

    def estimate(self, sim):
        return MethodOutput({})


@pytest.fixture(scope="module")
def trials():
    continuous = simulate(SimulationConfig(n_individuals=8, t_max=90, sigma_b=4.0, seed=1))
    binary = simulate(SimulationConfig(n_individuals=8, t_max=90, sigma_b=4.0, kind="binary", seed=2))
    return [continuous, binary]


def test_empty_method_list_is_rejected(trials):
    with pytest.raises(BaselineError):
        benchmark(trials, [])


def test_oracle_row_has_zero_error(trials):
    result = benchmark(trials, [OracleMethod(), HalfMethod(), SilentMethod()], ["c", "b"])
    table = result.table

    assert table.index.tolist() == ["oracle", "half", "silent"]
    assert list(table.columns) == ["mean_error", "median_error", "pearson_r", "n_detected", "n_undetected", "note"]
    assert table.loc["oracle", "mean_error"] == 0.0
    assert table.loc["oracle", "pearson_r"] == pytest.approx(1.0)
    assert table.loc["half", "n_detected"] == 16
    assert table.loc["silent", "n_undetected"] == 16
    assert np.isnan(table.loc["silent", "mean_error"])

    truth = result.per_individual.query("method == 'half'")
    assert np.allclose(truth["error"], truth["true_length"] / 2)
    assert result.variability.empty


def test_kind_table_averages_trial_means():
    rows = pd.DataFrame([
        {"trial": "b0", "kind": "binary", "method": "cyhmm", "error": 1.0},
        {"trial": "b0", "kind": "binary", "method": "cyhmm", "error": 3.0},
        {"trial": "c0", "kind": "continuous", "method": "cyhmm", "error": 4.0},
        {"trial": "b0", "kind": "binary", "method": "fourier", "error": 8.0},
        {"trial": "c0", "kind": "continuous", "method": "fourier", "error": 4.0},
    ])
    table = kind_table(rows)

    assert table.loc["cyhmm", "Binary"] == 2.0
    assert table.loc["cyhmm", "All"] == 3.0
    assert table.loc["fourier", "All"] == 6.0
    assert table.loc["fourier", "improvement"] == pytest.approx(0.5)
    assert table.loc["cyhmm", "improvement"] == 0.0


def test_partial_periodicity_rows_are_flagged():
    rows = pd.DataFrame([
        {"trial": "b0", "kind": "binary", "method": "partial_periodicity_d2", "id": "a",
         "true_length": 30.0, "estimate": 28.0, "error": 2.0},
    ])

    assert error_table(rows).loc["partial_periodicity_d2", "note"] == "reimplementation"


def test_methods_only_run_on_their_kind(trials):
    binary_only = BaselineMethod("binary_fourier", fourier_period, kinds=(FeatureKind.BINARY,), n_workers=2)
    result = benchmark(trials, [binary_only], ["c", "b"])

    assert set(result.per_individual["trial"]) == {"b"}
    assert binary_only.applies_to(FeatureKind.BINARY)
    assert not binary_only.applies_to(FeatureKind.CONTINUOUS)


def test_cyhmm_method_reports_model_and_variability(trials):
    method = CyhmmMethod(FitConfig(n_states=2, init_grid=[30], max_iters=3), label="cyhmm")
    result = benchmark(trials[:1], [method, OracleMethod()])

    assert len(result.variability) == 1
    assert result.variability.loc[0, "method"] == "cyhmm"
    assert set(result.per_individual["method"]) == {"cyhmm", "oracle"}
    assert result.kind_table().loc["oracle", "All"] == 0.0


def test_ablation_ratio():
    rows = pd.DataFrame([
        {"method": "cyhmm", "kind": "continuous", "error": 2.0},
        {"method": "cyhmm_geometric", "kind": "continuous", "error": 5.0},
        {"method": "cyhmm_geometric", "kind": "binary", "error": 50.0},
    ])
    result = BenchmarkResult(rows, pd.DataFrame(), pd.DataFrame())

    assert result.ablation_ratio() == pytest.approx(2.5)
    assert result.mean_error("cyhmm_geometric") == pytest.approx(27.5)


def test_grid_trials_are_reproducible():
    grid = BenchmarkGrid(trials_per_kind=3, n_individuals=5)
    trials = grid.trials()

    assert [label for label, _ in trials] == [
        "binary_000", "binary_001", "binary_002", "continuous_000", "continuous_001", "continuous_002"]
    assert [c.to_dict() for _, c in trials] == [c.to_dict() for _, c in grid.trials()]
    for _, config in trials:
        assert config.t_max in (90, 180)
        assert 5.0 <= config.sigma_n <= 50.0
        assert 0.0 <= config.p_missing <= 0.9


def test_grid_method_roster():
    names = [m.name for m in BenchmarkGrid().methods()]

    assert names == ["cyhmm", "cyhmm_geometric", "fourier", "autocorrelation",
                     "partial_periodicity_d2", "partial_periodicity_d5", "partial_periodicity_d10"]
    assert "cyhmm_geometric" not in [m.name for m in BenchmarkGrid(ablation=False).methods()]


def test_grid_document():
    grid = BenchmarkGrid.from_dict({"trials_per_kind": 2, "kinds": ["continuous"], "deltas": [2]})

    assert grid.kinds == ("continuous",)
    assert grid.to_dict()["deltas"] == [2]
    with pytest.raises(ConfigError):
        BenchmarkGrid.from_dict({"trials": 2})
    with pytest.raises(ConfigError):
        BenchmarkGrid(p_missing=(0.0, 1.0))


def test_run_grid_with_baselines_only():
    grid = BenchmarkGrid(trials_per_kind=1, n_individuals=6, t_max_choices=(90,), deltas=(2,))
    methods = [m for m in grid.methods(n_workers=1) if not m.name.startswith("cyhmm")]
    result = run_grid(grid, methods)

    assert result.trial_parameters["trial"].tolist() == ["binary_000", "continuous_000"]
    assert "partial_periodicity_d2" in result.table.index
    partial = result.per_individual.query("method == 'partial_periodicity_d2'")
    assert set(partial["kind"]) == {"binary"}
    assert len(result.per_individual) == 6 * (3 + 2)
