"""Prediction laws of Gaussian Volterra processes with compound Poisson jumps."""

__version__ = "0.1.1"
