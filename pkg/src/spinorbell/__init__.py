"""Bogoliubov pair scattering from a spin-1 condensate in an optical lattice."""

__version__ = "0.1.0"
