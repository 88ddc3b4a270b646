"""Partial-boundary D-bar reconstructions for electrical impedance tomography on the unit disc."""

__version__ = "0.1.0"
