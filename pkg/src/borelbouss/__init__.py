"""Borel-plane solver for the periodic Boussinesq equations."""

__version__ = "0.1.0"
