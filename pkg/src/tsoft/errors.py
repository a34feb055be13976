"""Exception types shared across the package."""


class CongruenceError(ValueError):
    """Two parameter sets (or subsets) do not share the same layout."""


class DomainError(ValueError):
    """An input value is non-finite or outside the domain of an operation."""


class ParameterError(ValueError):
    """A hyperparameter or configuration value is out of range."""


class ConvergenceError(RuntimeError):
    """An iterative procedure failed to converge.

    The last iterate is kept on ``last`` so callers can inspect it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last
