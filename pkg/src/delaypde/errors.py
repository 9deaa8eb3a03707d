"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: configuration, dimensions, or violated preconditions."""


class NumericalError(RuntimeError):
    """A numerical kernel failed (non-convergence, non-Hurwitz matrix, overflow)."""
