"""Gaussian-process active learning of expensive simulator responses."""

__version__ = "0.1.0"
