"""
cyhmm-engine - cyclic explicit-duration hidden Markov models for populations of time series
"""

__version__ = "1.0.0"
