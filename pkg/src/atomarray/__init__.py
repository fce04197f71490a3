"""Subradiant band gaps and impurity-mediated interactions in 3D atomic arrays."""

__version__ = "0.1.0"
