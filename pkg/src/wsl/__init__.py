"""Weighted Sobolev laboratory: discrete verification of weighted spectral and embedding estimates."""

__version__ = "0.1.0"
