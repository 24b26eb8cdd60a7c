"""Core functionality for cyhmm-engine"""

from .base_ability import BaseAbility
from .ability_manager import AbilityManager

__all__ = ['BaseAbility', 'AbilityManager']
