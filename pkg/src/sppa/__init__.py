"""Spatial point pattern statistics for locational class probabilities."""

__version__ = "0.1.0"
