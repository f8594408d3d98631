"""Homogenized in-situ leaching simulator: cell problems, effective
coefficient tables, the macroscopic reservoir model and the free-boundary
fixed point."""

__version__ = "0.1.0"
