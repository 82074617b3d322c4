"""Gridworld simulator and experiment harness for a situationally-aware agent
with a bounded observation radius, a learned trajectory estimator and
risk-bounded reliance on it."""

__version__ = "0.1.0"
