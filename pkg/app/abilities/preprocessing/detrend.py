from typing import Any, Dict

from ...core.base_ability import BaseAbility
from ...cyhmm.dataset import FeatureKind, detrend, load_csv, write_csv
from ...utils.output_helper import OutputHelper
from ..common import finish, require_file


class DetrendAbility(BaseAbility):
    """Subtract a centred moving average from every continuous feature"""

    required_fields = ("data", "output_dir")

    @property
    def name(self) -> str:
        return "detrend"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        await super().validate(context)
        if FeatureKind.parse(context.get("kind", "continuous")) is not FeatureKind.CONTINUOUS:
            raise ValueError("detrend applies to continuous data only")
        return True

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        out = OutputHelper(context["output_dir"])
        path = require_file(context["data"])
        out.record_input(path)
        ds = detrend(load_csv(path, FeatureKind.CONTINUOUS), int(context.get("window", 15)))
        out.write_text(context.get("output_name", "detrended.csv"), write_csv(ds))
        return finish(out, context, ds.summary())
