"""Calibration-free SSVEP decoding toolkit."""

__version__ = "0.1.0"
