"""Semantic ray-frontier navigation on a synthetic indoor simulator."""
__version__ = "0.1.0"
