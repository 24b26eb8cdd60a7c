from .detrend import DetrendAbility

__all__ = ['DetrendAbility']
