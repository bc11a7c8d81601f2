"""Lagrangian dual information for pairwise-constrained clustering."""

__version__ = "0.1.0"
