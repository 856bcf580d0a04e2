"""Delay-aware backpressure scheduling with heavy-traffic analysis."""
__version__ = "0.1.0"
