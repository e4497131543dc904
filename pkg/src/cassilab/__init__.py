"""Desk-scale CASSI snapshot spectral imaging laboratory."""

__version__ = "0.1.0"
