"""Multi-agent reinforcement-learning decision forests and classical baselines."""

__version__ = "0.1.0"
