"""Gaussian plume simulation and gradient-based MCMC source inversion."""

__version__ = "0.1.0"
