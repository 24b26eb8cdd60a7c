from .fit import FitAbility
from .select_states import SelectStatesAbility

__all__ = ['FitAbility', 'SelectStatesAbility']
