"""Exception hierarchy shared by all modules."""


class ModelError(ValueError):
    """Inconsistent or degenerate model parameters."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class EvaluationError(ArithmeticError):
    """Numerical procedure failed to reach its tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class IntegrabilityError(EvaluationError):
    """An expectation that should be finite diverges numerically."""


class RegimeError(ValueError):
    """A closed form was requested outside the regime where it holds."""
