"""Gridworld trolley dilemmas with lexicographically ranked moral norms."""

__version__ = "0.1.0"
