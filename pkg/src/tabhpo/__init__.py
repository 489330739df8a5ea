"""Hyperparameter optimization and tabular ML experiment toolkit."""

__version__ = "0.1.0"
