"""Exception types shared across the solvers."""


class ValidationError(ValueError):
    """A model failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = [violations] if isinstance(violations, str) else list(violations)
        super().__init__("; ".join(self.violations) or "invalid model")


class NumericalError(ArithmeticError):
    """A linear solve was singular or its residual exceeded tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IterationLimitError(RuntimeError):
    """An iterative solver hit its round cap. ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NotConvergedError(IterationLimitError):
    """RPPI / RVI / RRVI ran out of outer rounds."""

    def __init__(self, message, last_gamma=None, last_gap=None, last_estimate=None):
        super().__init__(message, best=last_estimate)
        self.last_gamma = last_gamma
        self.last_gap = last_gap
        self.last_estimate = last_estimate


class BudgetExceeded(RuntimeError):
    """Brute-force enumeration would exceed the configured budget."""
