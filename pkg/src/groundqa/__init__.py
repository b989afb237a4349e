"""Grounded video question answering toolkit."""

__version__ = "0.1.0"
