from .cycle_analyzer import CycleAnalyzer

__all__ = ['CycleAnalyzer']
