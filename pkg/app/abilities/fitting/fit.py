import logging
from typing import Any, Dict

import pandas as pd

from ...core.base_ability import BaseAbility
from ...cyhmm.model import CyhmmModel
from ...cyhmm.training import em_fit
from ...utils.output_helper import OutputHelper
from ..common import finish, fit_config, preprocessing, read_dataset, require_file

logger = logging.getLogger(__name__)


class FitAbility(BaseAbility):
    """Fit a CyHMM to a CSV dataset and write the model and its loglik trace"""

    required_fields = ("data", "kind", "output_dir")

    @property
    def name(self) -> str:
        return "fit"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        await super().validate(context)
        fit_config(context)
        return True

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        config = fit_config(context)
        out = OutputHelper(context["output_dir"])
        ds = read_dataset(context, out)
        initial = None
        if context.get("initial_model"):
            path = require_file(context["initial_model"])
            out.record_input(path)
            initial = CyhmmModel.load(path)
        result = em_fit(config, ds, initial_model=initial)

        out.write_json("model.json", result.model.to_dict())
        out.write_frame("loglik_trace.csv", pd.DataFrame({
            "iteration": range(1, len(result.loglik_trace) + 1),
            "loglik": result.loglik_trace,
        }))
        summary = {
            "loglik": result.loglik,
            "iterations": len(result.loglik_trace),
            "converged": result.converged,
            "chosen_init": result.chosen_init,
            "init_logliks": {str(k): v for k, v in result.init_logliks.items()},
            "expected_durations": result.model.expected_durations().tolist(),
            "expected_cycle_length": result.model.expected_cycle_length(),
            "preprocessing": preprocessing(context),
        }
        out.write_json("fit_summary.json", summary)
        return finish(out, context, summary)
