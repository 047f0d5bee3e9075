"""Monte Carlo gradient estimators unified by probability flows."""

__version__ = "0.1.0"
