"""Slow/fast video anomaly detection over fast-detector score streams."""

__version__ = "0.1.0"
