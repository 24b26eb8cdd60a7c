import json
import logging
import os
from typing import Any, Dict, List

import pandas as pd

from ...core.base_ability import BaseAbility
from ...cyhmm.analysis import cycle_lengths, feature_trajectories, feature_variability
from ...cyhmm.model import CyhmmModel
from ...utils.output_helper import OutputHelper
from ..common import finish, preprocessing, read_dataset, require_file

logger = logging.getLogger(__name__)

REPORT_TYPES = ['cycle_lengths', 'trajectories', 'variability', 'states']


class CycleAnalyzer(BaseAbility):
    """Cycle characterization of a fitted model"""

    required_fields = ("model", "output_dir")

    @property
    def name(self) -> str:
        return "analyze"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        """Check the analysis request

        Required:
        - model: fitted model JSON
        - output_dir: where reports go
        - data: dataset CSV, needed by 'cycle_lengths' and 'states'

        Optional ``reports`` selects a subset of REPORT_TYPES (default all).
        """
        await super().validate(context)
        reports = self._reports(context)
        invalid = [r for r in reports if r not in REPORT_TYPES]
        if invalid:
            raise ValueError(f"Invalid report type {invalid}. Must be one of {REPORT_TYPES}")
        if {'cycle_lengths', 'states'} & set(reports) and not context.get("data"):
            raise ValueError("Missing required fields: ['data']")
        if context.get("horizon") is not None and int(context["horizon"]) < 1:
            raise ValueError("horizon must be >= 1")
        return True

    @staticmethod
    def _reports(context: Dict[str, Any]) -> List[str]:
        return list(context.get("reports") or REPORT_TYPES)

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        out = OutputHelper(context["output_dir"])
        model_path = require_file(context["model"])
        out.record_input(model_path)
        model = CyhmmModel.load(model_path)
        reports = self._reports(context)
        summary: Dict[str, Any] = {}

        if {'cycle_lengths', 'states'} & set(reports):
            self._check_preprocessing(context, model_path)
            ds = read_dataset({**context, "kind": context.get("kind") or model.kind.value}, out)
            report = cycle_lengths(model, ds, int(context.get("state_index", 0)), context.get("threads"))
            if 'cycle_lengths' in reports:
                summary.update(self._cycle_length_analysis(report, out))
            if 'states' in reports:
                summary.update(self._state_analysis(report, out))

        if {'trajectories', 'variability'} & set(reports):
            horizon = context.get("horizon") or 2 * max(int(round(model.nominal_cycle_length())), 1)
            trajectory = feature_trajectories(model, int(horizon))
            if 'trajectories' in reports:
                out.write_frame("trajectories.csv", trajectory.to_frame())
                out.write_json("trajectories.json", trajectory.to_dict())
                summary["cycle_length_L"] = trajectory.cycle_length_L
            if 'variability' in reports:
                summary.update(self._variability_analysis(trajectory, out))
        return finish(out, context, summary)

    def _cycle_length_analysis(self, report, out: OutputHelper) -> Dict:
        """Per-individual gaps and the histogram of modal lengths"""
        out.write_frame("cycle_lengths.csv", report.to_frame())
        histogram = pd.DataFrame({"length": list(report.histogram), "count": list(report.histogram.values())})
        out.write_frame("cycle_histogram.csv", histogram)
        out.write_json("cycle_report.json", report.to_dict())
        return {'population_mode': report.population_mode,
                'individuals_with_cycles': int(sum(1 for c in report.per_individual.values() if c.gaps))}

    def _state_analysis(self, report, out: OutputHelper) -> Dict:
        table = pd.DataFrame({
            "state": range(1, len(report.expected_durations) + 1),
            "expected_duration": report.expected_durations,
            "occupancy": report.state_occupancy,
        })
        out.write_frame("states.csv", table)
        return {'expected_durations': table["expected_duration"].tolist()}

    def _variability_analysis(self, trajectory, out: OutputHelper) -> Dict:
        ranked = feature_variability(trajectory)
        table = pd.DataFrame(ranked, columns=["feature", "variability"])
        table.insert(0, "rank", range(1, len(table) + 1))
        out.write_frame("variability.csv", table)
        return {'most_variable': ranked[0][0] if ranked else None}

    @staticmethod
    def _check_preprocessing(context: Dict[str, Any], model_path: str) -> None:
        """Warn when the data is prepared differently from the fit that produced the model"""
        fit_summary = os.path.join(os.path.dirname(os.path.abspath(model_path)), "fit_summary.json")
        if not os.path.isfile(fit_summary):
            return
        with open(fit_summary, "r", encoding="utf-8") as f:
            fitted = json.load(f).get("preprocessing")
        current = preprocessing(context)
        if fitted is not None and fitted != current:
            logger.warning(f"Model was fitted with preprocessing {fitted}, analyzing with {current}")
