"""Quantum statistics workbench: states, measurement, teleportation, information bounds."""

__version__ = "0.1.0"
