"""Exception hierarchy shared by the library and the command-line driver."""


class DynShapeError(Exception):
    """Base class for all errors raised by dynshape."""


class GeometryError(DynShapeError, ValueError):
    """Array dimensions or acquisition geometry do not agree."""


class ConfigError(DynShapeError, ValueError):
    """Invalid configuration value or schema violation."""


class NumericalError(DynShapeError, ArithmeticError):
    """A computation could not proceed (flat level set, NaN, stagnation)."""
