"""Invariance-preserving Euler scheme for nonlinear age-structured models."""

__version__ = "0.1.0"
