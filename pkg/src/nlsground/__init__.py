"""Normalized ground states of coupled mass-supercritical NLS systems on R^3."""

__version__ = "0.1.0"
