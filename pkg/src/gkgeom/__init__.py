"""Generalized Kähler geometry on flat tori: fiber algebra, spectral fields, flows and checks."""

__version__ = "0.1.0"
