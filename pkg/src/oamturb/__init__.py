"""Turbulence-induced decoherence of OAM photons and error detection/correction on top of it."""
from .modes import DomainError, ModeIndex, PhysicalParams, Truncation

__version__ = "0.1.0"

__all__ = ["DomainError", "ModeIndex", "PhysicalParams", "Truncation", "__version__"]
