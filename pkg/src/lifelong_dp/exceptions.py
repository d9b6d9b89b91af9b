class LifelongDPError(Exception):
    """Base class for all package errors."""


class ParameterError(LifelongDPError, ValueError):
    pass


class ConfigurationError(LifelongDPError, ValueError):
    pass


class ShapeError(LifelongDPError, ValueError):
    pass


class UsageError(LifelongDPError, RuntimeError):
    pass


class NumericError(LifelongDPError, ArithmeticError):
    pass


class DataError(LifelongDPError, ValueError):
    pass


class DegenerateReferenceError(LifelongDPError, ArithmeticError):
    """Episodic gradient is zero, so the projection is undefined."""


class ComparisonError(LifelongDPError, ValueError):
    pass
