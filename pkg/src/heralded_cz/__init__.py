"""Heralded dual-rail buffer-atom-mediated Rydberg CZ gate simulator."""

__version__ = "0.1.0"
