"""Evolutionary optimization of parallel kernels on a SIMT cost-model VM."""

__version__ = "0.1.0"
