"""Finite-section spectral toolkit for periodic Helmholtz operators on a strip."""

__version__ = "0.1.0"
