"""
Exception hierarchy shared by the solver modules and the command-line front end.
"""


class RoadSpreadError(Exception):
    """Base class for every error raised by the package."""


class DomainError(RoadSpreadError, ValueError):
    """A query lies outside the domain where the quantity is defined."""


class KernelError(RoadSpreadError, ValueError):
    """An exchange kernel was rejected."""


class ConfigError(RoadSpreadError, ValueError):
    """A run configuration failed schema validation."""


class SolverFailure(RoadSpreadError, RuntimeError):
    """A numerical procedure did not converge or was misconfigured."""
