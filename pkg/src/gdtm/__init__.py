"""Gradient descent that traces Turing machines."""

__version__ = "0.1.0"
