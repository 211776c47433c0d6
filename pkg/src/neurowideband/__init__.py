"""Neuro-wideband CSI extrapolation."""
__version__ = "0.1.0"
