"""Numerical laboratory for Birkhoff attractors of conformally symplectic pendulum-type flows."""

__version__ = "0.1.0"
