"""Berry-Esseen rate experiments for non-linear statistics of mixing sequences."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    BerrymixError,
    BudgetExceededError,
    ConfigError,
    DegenerateVarianceError,
    InfeasibleParametersError,
    InsufficientDataError,
    NonFiniteSampleError,
    UnsupportedStatisticError,
    ValidationError,
)

__all__ = [
    "BerrymixError",
    "BudgetExceededError",
    "ConfigError",
    "DegenerateVarianceError",
    "InfeasibleParametersError",
    "InsufficientDataError",
    "NonFiniteSampleError",
    "UnsupportedStatisticError",
    "ValidationError",
    "__version__",
]
