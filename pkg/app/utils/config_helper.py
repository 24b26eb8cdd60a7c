"""Config loading and precedence: flags > --config file > config/config.yaml defaults"""
import logging
import os
from typing import Any, Dict, Mapping, Optional

import yaml

from ..core.errors import ConfigError
from .parallel import resolve_workers

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))),
                                   "config", "config.yaml")


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Load a YAML (or JSON) configuration file

    Raises:
        FileNotFoundError: When the file does not exist
        ConfigError: When the file is not a mapping
    """
    path = path or DEFAULT_CONFIG_PATH
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse config {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must be a mapping, got {type(data).__name__}")
    return data


def section_key(command: str) -> str:
    return command.replace("-", "_")


def _section(config: Mapping[str, Any], command: str, flat_ok: bool) -> Dict[str, Any]:
    key = section_key(command)
    if key in config:
        return dict(config[key] or {})
    if flat_ok and "runtime" not in config:
        return dict(config)
    return {}


def resolve_context(command: str, defaults: Mapping[str, Any],
                    user_config: Optional[Mapping[str, Any]] = None,
                    flags: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Merge runtime and subcommand settings. A user file may be sectioned like
    config.yaml or flat (then it applies to ``command`` only). Flags set to None are unset."""
    user_config = user_config or {}
    context: Dict[str, Any] = {}
    context.update(defaults.get("runtime") or {})
    context.update(_section(defaults, command, flat_ok=False))
    context.update(user_config.get("runtime") or {})
    context.update(_section(user_config, command, flat_ok=True))
    context.update({k: v for k, v in (flags or {}).items() if v is not None})
    context["metrics"] = {**(defaults.get("metrics") or {}), **(user_config.get("metrics") or {})}
    context["threads"] = resolve_workers(context.get("threads"))
    context["command"] = command
    return context


def pick(context: Mapping[str, Any], keys) -> Dict[str, Any]:
    """Subset of ``context`` with the given keys that are set"""
    return {k: context[k] for k in keys if context.get(k) is not None}
