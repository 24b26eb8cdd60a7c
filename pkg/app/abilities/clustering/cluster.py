import dataclasses
from typing import Any, Dict

import pandas as pd

from ...core.base_ability import BaseAbility
from ...cyhmm.clustering import ClusterConfig, cluster_em, cluster_summary, select_cluster_count
from ...utils.config_helper import pick
from ...utils.output_helper import OutputHelper
from ..common import finish, fit_config, read_dataset

CLUSTER_KEYS = tuple(f.name for f in dataclasses.fields(ClusterConfig))


class ClusterAbility(BaseAbility):
    """Model-based clustering of individuals, optionally with an elbow scan over cluster counts"""

    required_fields = ("data", "kind", "output_dir", "n_clusters")

    @property
    def name(self) -> str:
        return "cluster"

    @property
    def version(self) -> str:
        return "1.0.0"

    async def validate(self, context: Dict[str, Any]) -> bool:
        await super().validate(context)
        ClusterConfig.from_dict(pick(context, CLUSTER_KEYS))
        fit_config(context)
        candidates = context.get("candidates")
        if candidates is not None and (not isinstance(candidates, (list, tuple)) or not candidates):
            raise ValueError("candidates must be a non-empty list of cluster counts")
        return True

    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        config = fit_config(context)
        cluster_config = ClusterConfig.from_dict(pick(context, CLUSTER_KEYS))
        out = OutputHelper(context["output_dir"])
        ds = read_dataset(context, out)

        result = cluster_em(ds, cluster_config.n_clusters, config, cluster_config)
        out.write_frame("assignment.csv", result.to_frame())
        for c, model in enumerate(result.models, start=1):
            out.write_json(f"models/cluster_{c}.json", model.to_dict())
        out.write_frame("cluster_summary.csv", cluster_summary(ds, result))
        out.write_frame("cluster_trace.csv", pd.DataFrame({
            "iteration": range(1, len(result.total_loglik_trace) + 1),
            "total_loglik": result.total_loglik_trace,
        }))
        summary = {
            "n_clusters": result.C,
            "converged": result.converged,
            "total_loglik": result.total_loglik_trace[-1],
            "sizes": pd.Series(result.labels + 1).value_counts().sort_index().tolist(),
        }
        if context.get("candidates"):
            scan = select_cluster_count(ds, context["candidates"], config, cluster_config)
            out.write_frame("cluster_selection.csv", scan)
            summary["candidates"] = scan["n_clusters"].tolist()
        return finish(out, context, summary)
