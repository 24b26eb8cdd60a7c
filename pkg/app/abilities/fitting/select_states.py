from typing import Any, Dict

from ...core.base_ability import BaseAbility
from ...cyhmm.training import state_count_scores
from ...utils.output_helper import OutputHelper
from ..common import finish, fit_config, read_dataset


class SelectStatesAbility(BaseAbility):
    """Cross-validated choice of the number of latent states"""

    required_fields = ("data", "kind", "output_dir", "candidates")

    @property
    def name(self) -> str:
        return "select-states"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        await super().validate(context)
        candidates = context["candidates"]
        if not isinstance(candidates, (list, tuple)) or not candidates:
            raise ValueError("candidates must be a non-empty list of state counts")
        if any(int(c) < 1 for c in candidates):
            raise ValueError(f"State counts must be >= 1, got {candidates}")
        if int(context.get("folds", 5)) < 2:
            raise ValueError("folds must be >= 2")
        return True

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        config = fit_config(context)
        out = OutputHelper(context["output_dir"])
        ds = read_dataset(context, out)
        candidates = sorted({int(c) for c in context["candidates"]})
        if len(candidates) == 1:
            return finish(out, context, {"n_states": candidates[0], "scores": []})
        scores = state_count_scores(ds, candidates, int(context.get("folds", 5)), config)
        best = int(scores.loc[scores["heldout_loglik_per_cell"].idxmax(), "n_states"])
        table = scores.assign(fold_scores=scores["fold_scores"].map(lambda s: " ".join(f"{v:.6f}" for v in s)))
        out.write_frame("state_selection.csv", table)
        return finish(out, context, {"n_states": best, "scores": scores["heldout_loglik_per_cell"].tolist()})
