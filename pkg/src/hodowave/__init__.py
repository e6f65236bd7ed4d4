"""Rotational Stokes waves in partial-hodograph variables: branches,
Frechet spectra and subharmonic bifurcation diagnostics."""

__version__ = "0.1.0"
