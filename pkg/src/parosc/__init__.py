"""Degenerate parametric oscillation in membrane optomechanics."""
__version__ = "0.1.0"
