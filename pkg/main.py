import logging
import os
import sys
from typing import Any, Dict, List, Optional

from app.abilities import (
    BenchmarkAbility,
    ClusterAbility,
    CycleAnalyzer,
    DetrendAbility,
    FitAbility,
    SelectStatesAbility,
    SimulateAbility,
)
from app.api.cli import run
from app.core.ability_manager import AbilityManager
from app.utils.config_helper import load_config


def configure_logging(config: Dict[str, Any]) -> None:
    settings = config.get("logging", {})
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if settings.get("file"):
        directory = os.path.dirname(settings["file"])
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(settings["file"]))
    logging.basicConfig(
        level=settings.get("level", "INFO"),
        format=settings.get("format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"),
        handlers=handlers,
    )


def make_manager() -> AbilityManager:
    """Ability manager with every subcommand registered"""
    ability_manager = AbilityManager()
    ability_manager.register(SimulateAbility())
    ability_manager.register(DetrendAbility())
    ability_manager.register(FitAbility())
    ability_manager.register(SelectStatesAbility())
    ability_manager.register(CycleAnalyzer())
    ability_manager.register(ClusterAbility())
    ability_manager.register(BenchmarkAbility())
    return ability_manager


def main(argv: Optional[List[str]] = None) -> int:
    config = load_config()
    configure_logging(config)
    manager = make_manager()
    logging.debug(f"Registered abilities: {manager.list_abilities()}")
    return run(manager, config, argv)


if __name__ == "__main__":
    sys.exit(main())
