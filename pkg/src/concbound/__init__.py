"""Exponential concentration bounds for probabilistic loops and recurrences."""

__version__ = "0.1.0"
