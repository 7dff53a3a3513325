"""Discrete-ordinates radiation transport with rotated quadratures."""

__version__ = "0.1.0"
