"""Simulator for atomic multi-party cross-chain swaps with alternative trades."""

__version__ = "0.1.0"
