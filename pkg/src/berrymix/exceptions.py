"""Exception types raised across the package."""


class BerrymixError(Exception):
    """Base class for package errors."""


class ValidationError(BerrymixError, ValueError):
    """Input does not satisfy a documented precondition."""


class BudgetExceededError(BerrymixError):
    """An exact computation would exceed its configured size budget."""


class InsufficientDataError(BerrymixError, ValueError):
    """Too few usable points for a fit."""


class DegenerateVarianceError(BerrymixError):
    """A variance is too small for the requested construction."""


class InfeasibleParametersError(BerrymixError, ValueError):
    """Parameters admit no valid construction."""


class UnsupportedStatisticError(BerrymixError):
    """The statistic variant does not define the requested quantity."""


class NonFiniteSampleError(BerrymixError, ValueError):
    """A sample contains NaN or infinite values."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(BerrymixError):
    """Experiment configuration is malformed."""

    def __init__(self, message, path=()):
        loc = "/".join(str(p) for p in path)
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = tuple(path)
