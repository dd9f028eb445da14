"""Spectral simulation and critical-norm diagnostics for the (u, F) form of
the simplified Ericksen-Leslie nematic liquid-crystal system on a torus."""

from .fields import Grid, SpectralField, StateUF, Trajectory, transform, inverse
from .littlewood_paley import BesovSpec, DyadicSystem, besov_norm, chemin_lerner_norm, lq_besov_norm

__all__ = [
    "Grid", "SpectralField", "StateUF", "Trajectory", "transform", "inverse",
    "BesovSpec", "DyadicSystem", "besov_norm", "chemin_lerner_norm", "lq_besov_norm",
]
__version__ = "0.1.0"
