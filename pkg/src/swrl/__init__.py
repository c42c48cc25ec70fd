"""Subspace-decomposed reinforcement learning for articulated-object manipulation."""

__version__ = "0.1.0"
