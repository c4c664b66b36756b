"""Simulation and verification lab for data-driven newsvendor regret."""

__version__ = "0.1.0"
