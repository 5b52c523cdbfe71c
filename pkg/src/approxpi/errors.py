"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised for malformed models, dimension mismatches and bad arguments."""


class ConfigError(ValueError):
    """Raised when a run or experiment configuration cannot be honoured."""


class AssumptionViolation(ConfigError):
    """A sampled feature submatrix is rank deficient (rank condition on D_k)."""


class NumericalError(ArithmeticError):
    """A linear solve or eigensolve produced an unusable result."""


class GradientDivergenceError(NumericalError):
    """Gradient descent produced a non-finite iterate."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"gradient descent iterate became non-finite at step {iteration}")


class PreconditionViolated(ValueError):
    """A bound was requested whose contraction precondition does not hold."""
