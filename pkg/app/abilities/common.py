"""Helpers shared by the pipeline abilities"""
import logging
import os
from typing import Any, Dict

from ..cyhmm.dataset import FeatureKind, TimeSeriesDataset, apply_binary_missing_rule, detrend, filter_active, load_csv
from ..cyhmm.training import FitConfig
from ..utils import metrics
from ..utils.config_helper import pick
from ..utils.output_helper import OutputHelper

logger = logging.getLogger(__name__)

FIT_KEYS = ("n_states", "cycle_length", "init_grid", "max_iters", "rel_tol", "seed",
            "duration_family", "d_max", "chunk_size")


def fit_config(context: Dict[str, Any]) -> FitConfig:
    return FitConfig.from_dict({**pick(context, FIT_KEYS), "n_workers": context.get("threads")})


def require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Input file {path} not found")
    return path


def preprocessing(context: Dict[str, Any]) -> Dict[str, Any]:
    """The data preparation a run applies; fit records it so analyze can match it"""
    return {
        "binary_missing_rule": bool(context.get("binary_missing_rule", True)),
        "min_active_fraction": context.get("min_active_fraction") or None,
        "detrend_window": context.get("detrend_window") or None,
    }


def read_dataset(context: Dict[str, Any], out: OutputHelper, key: str = "data") -> TimeSeriesDataset:
    """Load the input CSV and apply the configured preprocessing.

    Binary data gets the logged-anything rule unless ``binary_missing_rule`` is
    false. The cohort filter runs before detrending.
    """
    path = require_file(context[key])
    out.record_input(path)
    ds = load_csv(path, context["kind"])
    if ds.kind is FeatureKind.BINARY and context.get("binary_missing_rule", True):
        ds = apply_binary_missing_rule(ds)
    if context.get("min_active_fraction"):
        ds = filter_active(ds, float(context["min_active_fraction"]))
    if ds.kind is FeatureKind.CONTINUOUS and context.get("detrend_window"):
        ds = detrend(ds, int(context["detrend_window"]))
    logger.info(f"Loaded {path}: {ds.summary()}")
    return ds


def finish(out: OutputHelper, context: Dict[str, Any], summary: Dict[str, Any]) -> Dict[str, Any]:
    """Write metrics and the run manifest, then describe the run"""
    settings = context.get("metrics") or {}
    if settings.get("enabled", False):
        out.write_text(settings.get("textfile", "metrics.prom"), metrics.render())
    out.write_manifest(context["command"], context, {"summary": summary})
    return {**summary, "output_dir": out.output_dir, "outputs": list(out.outputs)}
