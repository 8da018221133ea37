"""Semiparametric volatility models with covariates of varying frequency."""

__version__ = "0.1.0"
