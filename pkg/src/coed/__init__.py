"""Continuous edge direction graph neural networks on fuzzy directed graphs."""

__version__ = "0.1.0"
