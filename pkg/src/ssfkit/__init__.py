"""Spectral shift functions for non-self-adjoint perturbations."""

__version__ = "0.1.0"
