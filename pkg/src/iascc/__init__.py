"""Importance-aware source-channel coding for semantically segmented images."""

__version__ = "0.1.0"
