"""Depthwise-separable CNN with channel/spatial attention, written on numpy with hand-derived gradients."""

__version__ = "0.1.0"
