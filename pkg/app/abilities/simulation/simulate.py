import dataclasses
from typing import Any, Dict

import pandas as pd

from ...core.base_ability import BaseAbility
from ...cyhmm.dataset import write_csv
from ...cyhmm.simulation import SimulationConfig, simulate, simulate_populations
from ...utils.config_helper import pick
from ...utils.output_helper import OutputHelper
from ..common import finish

SIMULATION_KEYS = tuple(f.name for f in dataclasses.fields(SimulationConfig))


class SimulateAbility(BaseAbility):
    """Generate a synthetic dataset together with its ground truth"""

    required_fields = ("output_dir",)

    @property
    def name(self) -> str:
        return "simulate"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        await super().validate(context)
        populations = context.get("populations")
        if populations is not None and (not isinstance(populations, list) or not populations):
            raise ValueError("populations must be a non-empty list of per-population overrides")
        SimulationConfig.from_dict(pick(context, SIMULATION_KEYS))
        return True

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        base = SimulationConfig.from_dict(pick(context, SIMULATION_KEYS))
        if context.get("populations"):
            configs = [SimulationConfig.from_dict({**base.to_dict(), **overrides})
                       for overrides in context["populations"]]
            sim = simulate_populations(configs)
        else:
            sim = simulate(base)

        out = OutputHelper(context["output_dir"])
        out.write_text("data.csv", write_csv(sim.dataset))
        out.write_frame("truth.csv", sim.truth)
        out.write_frame("truth_trajectories.csv", sim.trajectories)
        out.write_frame("true_lengths.csv", pd.DataFrame(
            {"id": list(sim.true_lengths), "true_length": list(sim.true_lengths.values())}))
        out.write_frame("coefficients.csv", sim.coefficients)
        if sim.populations:
            out.write_frame("populations.csv", pd.DataFrame(
                {"id": list(sim.populations), "population": list(sim.populations.values())}))
        return finish(out, context, sim.dataset.summary())

