"""Desk-scale numerics for L^2 energies of quadratic pushforwards of Frostman measures."""

from quadenergy.errors import QuadEnergyError
from quadenergy.quadpoly import QuadPoly, classify, critical_set
from quadenergy.measure import DiscreteMeasure, build_cantor, cantor_at_scale
from quadenergy.energy import BinnedDistribution, SmoothingKernel, pushforward, smoothed_energy

__all__ = [
    "BinnedDistribution",
    "DiscreteMeasure",
    "QuadEnergyError",
    "QuadPoly",
    "SmoothingKernel",
    "build_cantor",
    "cantor_at_scale",
    "classify",
    "critical_set",
    "pushforward",
    "smoothed_energy",
]

__version__ = "0.1.0"
