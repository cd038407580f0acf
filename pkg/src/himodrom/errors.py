"""Exception hierarchy shared by all modules."""


class HiModError(Exception):
    """Base class for every error raised by :mod:`himodrom`."""


class ConfigurationError(HiModError, ValueError):
    """Invalid discretization, parameter domain or experiment setup."""


class GeometryError(HiModError):
    """The domain map is not invertible at a requested point."""


class BasisError(HiModError):
    """Construction of a modal or reduced basis failed."""


class SolverError(HiModError):
    """A linear solve or factorization failed."""


class FormulationError(HiModError):
    """A computed quantity violates a structural property (e.g. sign)."""
