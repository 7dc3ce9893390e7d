"""Optimal polynomial-time estimator simulator: constructions, algebra, audits."""

__version__ = "0.1.0"
