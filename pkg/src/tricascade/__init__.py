"""Simulation and correlation analysis of a three-photon quantum-dot cascade."""

__version__ = "0.1.0"
