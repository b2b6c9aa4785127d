"""Simulation and analysis toolchain for a two-ion spin-dependent-force gate."""

__version__ = "0.1.0"
