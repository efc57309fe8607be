"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (names, sizes, variances)."""


class DegeneratePriorError(ValueError):
    """The effective prior has no density (N_T = 0); use the discrete prior."""


class NumericalToleranceError(ArithmeticError):
    """A quadrature or root search failed its internal consistency check."""


class DivergenceError(FloatingPointError):
    """The message-passing recursion produced non-finite or runaway values."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"detector diverged at iteration {iteration}")


class InconsistencyError(RuntimeError):
    """Threshold quantities contradict each other (usually MC noise in the MSE)."""
