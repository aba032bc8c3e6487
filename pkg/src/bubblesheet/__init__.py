"""Numerical toolkit for bubble-sheet ancient flows in R^4."""

__version__ = "0.1.0"
