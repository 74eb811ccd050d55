"""Adaptive-lasso layering of candidate predictors into pathway networks."""

__version__ = "0.1.0"
