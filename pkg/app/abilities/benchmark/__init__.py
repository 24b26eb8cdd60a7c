from .benchmark import BenchmarkAbility

__all__ = ['BenchmarkAbility']
