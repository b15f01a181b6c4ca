"""Pseudospectral solver for a regularised, reacting, heat-conducting gas mixture."""
from .chemistry import ReactionKind, ReactionModel
from .constitutive import ConstitutiveParams, DomainError, ThermoPoint
from .solver import ApproxParams, InitialData, MixtureSolver, MixtureState, run
from .spectral import GridError, SpectralGrid

__all__ = [
    "ApproxParams", "ConstitutiveParams", "DomainError", "GridError", "InitialData",
    "MixtureSolver", "MixtureState", "ReactionKind", "ReactionModel", "SpectralGrid",
    "ThermoPoint", "run",
]
__version__ = "0.1.0"
