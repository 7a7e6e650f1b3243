"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when coefficient, design or penalty shapes disagree."""


class DataFormatError(ValueError):
    """Raised when an input file (CSV, JSON config, solution file) cannot be parsed."""


class DivergenceError(ArithmeticError):
    """Raised when the solver produces non-finite values."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class PowerIterationWarning(RuntimeWarning):
    """Power iteration hit its step limit before reaching the requested tolerance."""
