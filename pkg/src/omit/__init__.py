"""Outcome-assisted multiple imputation of missing treatments (OMIT)."""

__version__ = "0.1.0"
