"""Dual-perspective job recommendation with constraint-aligned ranking."""

__version__ = "0.1.0"
