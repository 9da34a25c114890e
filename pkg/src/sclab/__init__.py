"""Numerical laboratory for symplectic connections."""

__version__ = "0.1.0"
