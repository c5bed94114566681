"""Bosonic channel entropy laboratory."""

__version__ = "0.1.0"
