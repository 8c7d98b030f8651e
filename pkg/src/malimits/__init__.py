"""Monte Carlo calculator and desk-scale simulator for MIMO massive random access."""

__version__ = "0.1.0"

from .channel import ActivityScenario, ChannelRealization, CovarianceSpec, SystemConfig
from .errors import BudgetExceededError, ConfigError, InvalidArgumentError, NumericalFailureError
from .rand import McEstimate, RngStream, mc_expectation

__all__ = [
    "ActivityScenario",
    "BudgetExceededError",
    "ChannelRealization",
    "ConfigError",
    "CovarianceSpec",
    "InvalidArgumentError",
    "McEstimate",
    "NumericalFailureError",
    "RngStream",
    "SystemConfig",
    "mc_expectation",
]
