from .simulate import SimulateAbility

__all__ = ['SimulateAbility']
