"""Numerical laboratory for single-component null controllability of the
two-dimensional Stokes system on the unit square."""

__version__ = "0.1.0"
