"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration. ``path`` names the offending field when known."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class DivergenceError(NumericalError):
    """Raised when iterates blow up. Carries the iteration and the partial trace."""

    def __init__(self, k, message="iterates diverged", trace=None):
        self.k = k
        self.trace = trace
        super().__init__(f"{message} at iteration {k}")
