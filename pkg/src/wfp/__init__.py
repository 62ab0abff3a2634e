"""Windowed Fourier projection (WFP) solver for the 1D wave equation with
point scatterers.

The scattered field of M springs attached to an infinite (or periodic)
string is written as a single-layer potential over scatterer densities.
Marching the resulting Volterra system naively costs O(N_t) history work
per step; this package splits the potential into a short local-in-time
part (direct quadrature) and a smoothly windowed history part carried by
a truncated Fourier series whose modes obey exact one-step recurrences.

Top-level convenience imports cover the main user entry points; the
individual modules hold the full API.
"""

from .config import WfpConfig, derive_params, suggest_dt, gaussian_bandlimit
from .window import Window
from .potential import SpringSet, GaussianDensity, IncidentPulse
from .marcher import Marcher, simulate

__all__ = [
    "WfpConfig",
    "derive_params",
    "suggest_dt",
    "gaussian_bandlimit",
    "Window",
    "SpringSet",
    "GaussianDensity",
    "IncidentPulse",
    "Marcher",
    "simulate",
]

__version__ = "0.1.0"
