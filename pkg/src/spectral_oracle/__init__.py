"""Sublinear spectral clustering oracle for clusterable d-regular graphs."""

__version__ = "0.1.0"
