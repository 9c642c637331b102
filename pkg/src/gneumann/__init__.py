"""Radial solver for the fractional g-Laplacian Neumann problem on the unit ball."""

__version__ = "0.1.0"
