import hashlib
import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .. import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


class OutputHelper:
    """Writes run artifacts into one output directory.

    Every file is written to a temporary sibling and renamed into place, so a
    failed run never leaves a truncated artifact behind.
    """

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)
        self.outputs: List[str] = []
        self.inputs: Dict[str, str] = {}

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def write_text(self, name: str, text: str) -> str:
        """Atomically write ``text`` to ``name`` inside the output directory

        Returns:
            str: Path of the written file
        """
        target = self.path(name)
        os.makedirs(os.path.dirname(target), exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target), prefix=".tmp-", suffix=os.path.basename(name))
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        if name not in self.outputs:
            self.outputs.append(name)
        logger.info(f"Wrote {target}")
        return target

    def write_json(self, name: str, data: Any) -> str:
        return self.write_text(name, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")

    def write_frame(self, name: str, frame: pd.DataFrame, index: bool = False) -> str:
        return self.write_text(name, frame.to_csv(index=index, float_format="%.10g"))

    def record_input(self, path: str) -> None:
        self.inputs[os.path.abspath(path)] = file_digest(path)

    def write_manifest(self, command: str, config: Dict[str, Any],
                       extra: Optional[Dict[str, Any]] = None) -> str:
        """run_manifest.json: resolved config, tool version, input digests and outputs"""
        outputs = {name: file_digest(self.path(name)) for name in self.outputs}
        manifest = {
            "command": command,
            "version": __version__,
            "created": datetime.now(timezone.utc).isoformat(),
            "config": config,
            "inputs": dict(self.inputs),
            "outputs": outputs,
        }
        if extra:
            manifest.update(extra)
        return self.write_json(MANIFEST_NAME, manifest)
