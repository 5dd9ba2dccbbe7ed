"""Deterministic cyber-physical co-simulation of a microgrid under SCADA attacks."""

__version__ = "0.1.0"
