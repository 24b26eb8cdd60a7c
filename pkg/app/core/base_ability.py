from abc import ABC, abstractmethod
from typing import Any, Dict, Sequence


class BaseAbility(ABC):
    """Base class of every pipeline step (one per CLI subcommand)"""

    required_fields: Sequence[str] = ()

    @property
    @abstractmethod
    def name(self) -> str:
        """Subcommand name"""
        pass

    @property
    @abstractmethod
    def version(self) -> str:
        pass

    async def validate(self, context: Dict[str, Any]) -> bool:
        """Check the resolved context before running

        Args:
            context: Resolved configuration of the run (flags over file over defaults)

        Returns:
            bool: Whether the context is usable

        Raises:
            ValueError: When required fields are missing
        """
        missing = [f for f in self.required_fields if context.get(f) in (None, "")]
        if missing:
            raise ValueError(f"Missing required fields: {missing}")
        return True

    @abstractmethod
    async def execute(self, context: Dict[str, Any]) -> Dict[str, Any]:
        """Run the step and write its artifacts

        Args:
            context: Resolved configuration of the run

        Returns:
            Dict: Summary of the run, including the artifact paths written
        """
        pass
