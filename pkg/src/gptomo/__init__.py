"""Gaussian process tomography from heterodyne data on a phase-space grid."""

from .core_model import QFunctionParams, check_tp, positivity_status, tp_complete, tp_vector
from .errors import NumericalError
from .phase_space import PhaseSpaceGrid, make_grid

__all__ = [
    "NumericalError",
    "PhaseSpaceGrid",
    "QFunctionParams",
    "check_tp",
    "make_grid",
    "positivity_status",
    "tp_complete",
    "tp_vector",
]
__version__ = "0.1.0"
