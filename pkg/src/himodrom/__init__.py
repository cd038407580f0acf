"""Hierarchical model reduction with POD and greedy reduced bases."""

from .errors import (
    BasisError,
    ConfigurationError,
    FormulationError,
    GeometryError,
    HiModError,
    SolverError,
)

__version__ = "0.1.0"

__all__ = [
    "BasisError",
    "ConfigurationError",
    "FormulationError",
    "GeometryError",
    "HiModError",
    "SolverError",
    "__version__",
]
