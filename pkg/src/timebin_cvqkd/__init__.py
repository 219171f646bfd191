"""Time-bin CV QKD simulation and parameter-estimation engine."""

__version__ = "0.1.0"
