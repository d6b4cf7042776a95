"""Exact solvers for two-stage mixed integer linear optimization."""

__version__ = "0.1.0"
