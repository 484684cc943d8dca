"""Continuation of lattice ODE systems into PDEs and back, with applications."""

__version__ = "0.1.0"
