"""Explicit reference governor for a constrained 4-DoF boom crane."""

__version__ = "0.1.0"
