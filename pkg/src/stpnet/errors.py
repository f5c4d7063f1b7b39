"""Exception types shared across the package."""


class StpnetError(Exception):
    """Base class for all package errors."""


class ConfigError(StpnetError):
    """Invalid parameter, option, or configuration file (CLI exit code 2)."""


class NumericalError(StpnetError):
    """A numerical procedure failed, e.g. step-size underflow (CLI exit code 3)."""


class StructureError(StpnetError):
    """The fixed-point equation lacks the three-solution structure an
    operation requires (CLI exit code 3)."""
