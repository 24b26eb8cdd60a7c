import json
import os

import pandas as pd
import pytest

from app.abilities import (
    BenchmarkAbility,
    ClusterAbility,
    CycleAnalyzer,
    DetrendAbility,
    FitAbility,
    SelectStatesAbility,
    SimulateAbility,
)
from app.api.cli import EXIT_INVALID, EXIT_MISSING_INPUT, EXIT_OK, EXIT_UNKNOWN, run
from app.core.ability_manager import AbilityManager
from app.cyhmm.model import CyhmmModel
from app.utils.config_helper import load_config, resolve_context
from main import make_manager


@pytest.fixture
def defaults():
    config = load_config()
    config["metrics"] = {"enabled": True, "textfile": "metrics.prom"}
    return config


@pytest.fixture
def manager():
    return make_manager()


@pytest.fixture
def simulated(tmp_path, manager, defaults):
    """Small continuous dataset written by the simulate subcommand"""
    out = tmp_path / "sim"
    code = run(manager, defaults, ["simulate", "--output-dir", str(out), "--n-individuals", "8",
                                   "--t-max", "60", "--n-features", "2", "--threads", "1"])
    assert code == EXIT_OK
    return out


def _fit_args(data, out, threads="1"):
    return ["fit", "--data", str(data), "--kind", "continuous", "--n-states", "2", "--cycle-length", "30",
            "--max-iters", "4", "--chunk-size", "3", "--threads", threads, "--output-dir", str(out)]


@pytest.mark.asyncio
async def test_ability_validation():
    invalid = [
        (FitAbility(), {"kind": "continuous", "output_dir": "o"}),
        (FitAbility(), {"data": "d.csv", "kind": "continuous", "output_dir": "o", "n_states": 0}),
        (SelectStatesAbility(), {"data": "d.csv", "kind": "binary", "output_dir": "o", "candidates": []}),
        (SelectStatesAbility(), {"data": "d.csv", "kind": "binary", "output_dir": "o", "candidates": [2],
                                 "folds": 1}),
        (CycleAnalyzer(), {"model": "m.json", "output_dir": "o"}),
        (CycleAnalyzer(), {"model": "m.json", "output_dir": "o", "reports": ["histograms"]}),
        (CycleAnalyzer(), {"model": "m.json", "output_dir": "o", "reports": ["trajectories"], "horizon": 0}),
        (ClusterAbility(), {"data": "d.csv", "kind": "binary", "output_dir": "o"}),
        (ClusterAbility(), {"data": "d.csv", "kind": "binary", "output_dir": "o", "n_clusters": 2,
                            "candidates": []}),
        (DetrendAbility(), {"data": "d.csv", "output_dir": "o", "kind": "binary"}),
        (SimulateAbility(), {"output_dir": "o", "p_missing": 1.5}),
        (SimulateAbility(), {"output_dir": "o", "populations": []}),
        (BenchmarkAbility(), {"output_dir": "o", "trials_per_kind": 0}),
    ]
    for ability, context in invalid:
        with pytest.raises(ValueError):
            await ability.validate(context)

    assert await CycleAnalyzer().validate({"model": "m.json", "output_dir": "o", "reports": ["trajectories"]})
    assert await SimulateAbility().validate({"output_dir": "o", "n_individuals": 3})


@pytest.mark.asyncio
async def test_manager_registry(manager):
    assert set(manager.list_abilities()) == {
        "simulate", "detrend", "fit", "select-states", "analyze", "cluster", "benchmark"}
    with pytest.raises(KeyError):
        manager.get_ability("crawl")
    with pytest.raises(KeyError):
        await AbilityManager().execute_ability("fit", {})


def test_simulate_writes_dataset_and_truth(simulated):
    data = pd.read_csv(simulated / "data.csv")
    truth = pd.read_csv(simulated / "truth.csv")

    assert list(data.columns) == ["id", "t", "feature_0", "feature_1"]
    assert data["id"].nunique() == 8
    assert len(truth) == len(data)
    assert (simulated / "true_lengths.csv").exists()
    assert "cyhmm_em_iterations" in (simulated / "metrics.prom").read_text()

    manifest = json.loads((simulated / "run_manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["config"]["n_individuals"] == 8
    assert "data.csv" in manifest["outputs"]


def test_fit_then_analyze(tmp_path, manager, defaults, simulated, capsys):
    fit_dir = tmp_path / "fit"
    capsys.readouterr()
    assert run(manager, defaults, _fit_args(simulated / "data.csv", fit_dir)) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)

    model = CyhmmModel.load(str(fit_dir / "model.json"))
    assert model.J == 2 and model.K == 2
    trace = pd.read_csv(fit_dir / "loglik_trace.csv")
    assert len(trace) == summary["iterations"]
    manifest = json.loads((fit_dir / "run_manifest.json").read_text())
    assert os.path.abspath(simulated / "data.csv") in manifest["inputs"]
    assert set(summary["outputs"]) >= {"model.json", "loglik_trace.csv", "fit_summary.json"}

    analyze_dir = tmp_path / "analyze"
    code = run(manager, defaults, ["analyze", "--model", str(fit_dir / "model.json"),
                                   "--data", str(simulated / "data.csv"), "--output-dir", str(analyze_dir)])
    assert code == EXIT_OK
    for name in ("cycle_lengths.csv", "cycle_histogram.csv", "states.csv", "trajectories.csv",
                 "variability.csv", "cycle_report.json"):
        assert (analyze_dir / name).exists()
    assert len(pd.read_csv(analyze_dir / "states.csv")) == 2


def test_fit_is_independent_of_thread_count(tmp_path, manager, defaults, simulated):
    assert run(manager, defaults, _fit_args(simulated / "data.csv", tmp_path / "one", "1")) == EXIT_OK
    assert run(manager, defaults, _fit_args(simulated / "data.csv", tmp_path / "four", "4")) == EXIT_OK

    assert (tmp_path / "one" / "model.json").read_text() == (tmp_path / "four" / "model.json").read_text()


def test_detrend_subcommand(tmp_path, manager, defaults, simulated):
    out = tmp_path / "detrended"
    assert run(manager, defaults, ["detrend", "--data", str(simulated / "data.csv"), "--window", "5",
                                   "--output-dir", str(out)]) == EXIT_OK

    frame = pd.read_csv(out / "detrended.csv")
    assert list(frame.columns) == ["id", "t", "feature_0", "feature_1"]


def test_cluster_subcommand(tmp_path, manager, defaults, simulated):
    out = tmp_path / "cluster"
    code = run(manager, defaults, ["cluster", "--data", str(simulated / "data.csv"), "--kind", "continuous",
                                   "--n-clusters", "2", "--n-seed-models", "3", "--n-states", "2",
                                   "--max-iters", "3", "--max-outer-iters", "2", "--threads", "2",
                                   "--output-dir", str(out)])

    assert code == EXIT_OK
    assignment = pd.read_csv(out / "assignment.csv")
    assert set(assignment["cluster"]) <= {1, 2}
    assert (out / "models" / "cluster_1.json").exists()


def test_exit_codes(tmp_path, defaults, manager):
    assert run(AbilityManager(), defaults, ["simulate", "--output-dir", str(tmp_path)]) == EXIT_UNKNOWN
    assert run(manager, defaults, _fit_args(tmp_path / "missing.csv", tmp_path / "o")) == EXIT_MISSING_INPUT

    bad = _fit_args(tmp_path / "missing.csv", tmp_path / "o")
    bad[bad.index("--n-states") + 1] = "0"
    assert run(manager, defaults, bad) == EXIT_INVALID

    config = tmp_path / "flat.yaml"
    config.write_text("n_individuals: 0\n", encoding="utf-8")
    assert run(manager, defaults, ["--config", str(config), "simulate",
                                   "--output-dir", str(tmp_path)]) == EXIT_INVALID


def test_context_precedence():
    defaults = {"runtime": {"threads": 2, "output_dir": "out"}, "fit": {"n_states": 4, "seed": 0},
                "metrics": {"enabled": True}}
    user = {"fit": {"n_states": 3, "max_iters": 7}, "metrics": {"enabled": False}}
    context = resolve_context("fit", defaults, user, {"seed": 9, "max_iters": None})

    assert context["n_states"] == 3
    assert context["max_iters"] == 7
    assert context["seed"] == 9
    assert context["threads"] == 2
    assert context["command"] == "fit"
    assert context["metrics"] == {"enabled": False}

    flat = resolve_context("select-states", {"select_states": {"folds": 5}}, {"folds": 3})
    assert flat["folds"] == 3


def test_benchmark_subcommand(tmp_path, manager, defaults):
    grid = tmp_path / "grid.yaml"
    grid.write_text(
        "grid:\n"
        "  kinds: [continuous]\n"
        "  t_max_choices: [90]\n"
        "  init_grid: [30.0]\n"
        "  max_iters: 3\n", encoding="utf-8")
    out = tmp_path / "bench"
    code = run(manager, defaults, ["benchmark", "--grid-file", str(grid), "--trials-per-kind", "1",
                                   "--n-individuals", "6", "--n-states", "2", "--skip-ablation",
                                   "--threads", "2", "--output-dir", str(out)])

    assert code == EXIT_OK
    table = pd.read_csv(out / "error_table.csv", index_col=0)
    assert list(table.index) == ["cyhmm", "fourier", "autocorrelation"]
    assert len(pd.read_csv(out / "per_individual.csv")) == 6 * 3
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert os.path.abspath(grid) in manifest["inputs"]


def test_analyze_applies_the_fit_preprocessing(tmp_path, manager, defaults, simulated, caplog):
    data = simulated / "data.csv"
    fit_dir = tmp_path / "fit"
    assert run(manager, defaults, _fit_args(data, fit_dir) + ["--detrend-window", "5"]) == EXIT_OK
    summary = json.loads((fit_dir / "fit_summary.json").read_text())
    assert summary["preprocessing"]["detrend_window"] == 5

    analyze = ["analyze", "--model", str(fit_dir / "model.json"), "--data", str(data)]
    caplog.clear()
    with caplog.at_level("WARNING"):
        code = run(manager, defaults, analyze + ["--detrend-window", "5", "--output-dir", str(tmp_path / "a")])
    assert code == EXIT_OK
    assert "fitted with preprocessing" not in caplog.text
    manifest = json.loads((tmp_path / "a" / "run_manifest.json").read_text())
    assert manifest["config"]["detrend_window"] == 5

    with caplog.at_level("WARNING"):
        assert run(manager, defaults, analyze + ["--output-dir", str(tmp_path / "raw")]) == EXIT_OK
    assert "fitted with preprocessing" in caplog.text
