"""Radial-phonon Bose-Hubbard physics of trapped-ion Coulomb chains."""

__version__ = "0.1.0"
