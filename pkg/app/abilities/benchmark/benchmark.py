import dataclasses
import logging
import math
from typing import Any, Dict

from ...core.base_ability import BaseAbility
from ...cyhmm.benchmark import BenchmarkGrid, run_grid
from ...utils.config_helper import load_config, pick
from ...utils.output_helper import OutputHelper
from ..common import finish, require_file

logger = logging.getLogger(__name__)

GRID_KEYS = tuple(f.name for f in dataclasses.fields(BenchmarkGrid))


def _grid(context: Dict[str, Any]) -> BenchmarkGrid:
    """Grid file settings (``grid`` section or flat), then context overrides"""
    settings: Dict[str, Any] = {}
    if context.get("grid_file"):
        data = load_config(require_file(context["grid_file"]))
        settings.update(data.get("grid", data))
    settings.update(pick(context, GRID_KEYS))
    return BenchmarkGrid.from_dict(settings)


class BenchmarkAbility(BaseAbility):
    """Simulation grid, every estimator, error tables by data kind"""

    required_fields = ("output_dir",)

    @property
    def name(self) -> str:
        return "benchmark"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        await super().validate(context)
        _grid(context)
        return True

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        grid = _grid(context)
        out = OutputHelper(context["output_dir"])
        if context.get("grid_file"):
            out.record_input(context["grid_file"])
        result = run_grid(grid, n_workers=context.get("threads"))

        out.write_frame("error_table.csv", result.table, index=True)
        out.write_json("error_table.json", result.to_dict())
        out.write_frame("kind_table.csv", result.kind_table(), index=True)
        out.write_frame("per_individual.csv", result.per_individual)
        out.write_frame("variability.csv", result.variability)
        out.write_frame("trial_parameters.csv", result.trial_parameters)
        summary: Dict[str, Any] = {
            "grid": grid.to_dict(),
            "mean_error": {m: _finite(v) for m, v in result.table["mean_error"].items()},
            "pearson_r": {m: _finite(v) for m, v in result.table["pearson_r"].items()},
            "variability_correlation": _finite(result.variability["correlation"].mean()),
        }
        if grid.ablation and "continuous" in grid.kinds:
            summary["geometric_to_poisson_error_ratio"] = _finite(result.ablation_ratio())
        return finish(out, context, summary)


def _finite(value: float):
    value = float(value)
    return value if math.isfinite(value) else None
