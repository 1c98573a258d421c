"""Learned value-selection heuristics inside complete tree search over DP models."""

__version__ = "0.1.0"
