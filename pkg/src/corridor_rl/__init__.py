"""Corridor traffic simulator and signal-control laboratory."""

__version__ = "0.1.0"
