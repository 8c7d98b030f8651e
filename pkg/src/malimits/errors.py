"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A precondition on an argument or configuration value was violated."""


class ConfigError(InvalidArgumentError):
    """A run configuration could not be parsed or validated."""


class BudgetExceededError(RuntimeError):
    """An exhaustive search would exceed its configured subset budget."""


class NumericalFailureError(ArithmeticError):
    """A factorization or transform failed on data that should be well posed."""
