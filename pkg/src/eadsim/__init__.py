"""Simulator for multi-step environment-assisted decoherence suppression of optical states."""

from .eads import LoopConfig, theory_curves
from .fockspace import FockDensityMatrix, PureFockVector
from .phasespace import GaussianChannelSpec, GridSpec, WignerGrid

__all__ = [
    "FockDensityMatrix",
    "GaussianChannelSpec",
    "GridSpec",
    "LoopConfig",
    "PureFockVector",
    "WignerGrid",
    "theory_curves",
]

__version__ = "0.1.0"
