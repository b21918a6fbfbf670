"""Exception hierarchy."""


class RRMARError(Exception):
    """Base class for all package errors."""


class DataError(RRMARError, ValueError):
    """Input data is malformed, incomplete or non-numeric."""


class IllConditionedDataError(RRMARError):
    """The lagged regressor Gram matrix is singular or there are too few observations."""


class DivergenceError(RRMARError):
    """Gradient descent blew up; retry with a smaller step size."""


class GenerationError(RRMARError):
    """The simulator could not draw a stationary model."""


class PivotError(RRMARError, ValueError):
    """The requested normalization pivot leads a singular block."""


class ConfigError(RRMARError, ValueError):
    """A run configuration is missing, malformed or incomplete."""
