"""Viscous damage evolution in 1-D and its vanishing-viscosity (BV) analysis."""

__version__ = "0.1.0"
