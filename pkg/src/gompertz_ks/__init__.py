"""Finite-volume Keller-Segel simulator with Gompertz growth and a priori estimate checks."""

__version__ = "0.1.0"
