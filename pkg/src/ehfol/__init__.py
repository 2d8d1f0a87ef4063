"""Numerical laboratory for wave-Klein-Gordon systems on Euclidean-hyperboloidal slices."""

__version__ = "0.1.0"
