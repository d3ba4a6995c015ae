"""Trace-driven encryption-behavior detection and policy enforcement."""

__version__ = "0.1.0"

__all__ = ["__version__"]
