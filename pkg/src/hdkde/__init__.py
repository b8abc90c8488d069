"""Kernel density estimation theory and simulation in the large-dimension limit."""

__version__ = "0.1.0"
