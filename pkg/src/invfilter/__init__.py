"""Kalman and 3DVAR filters as iterative regularisation for linear inverse problems."""

__version__ = "0.1.0"
