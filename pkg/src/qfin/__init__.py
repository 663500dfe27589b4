"""Fractal price dynamics, density-derived potentials and Schrödinger solvers
for market time series."""

__version__ = "0.1.0"
