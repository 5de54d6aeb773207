"""Exception types raised by the package."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class InversionError(RuntimeError):
    """Numerical inversion of the posterior mean did not converge."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalError(FloatingPointError):
    """A non-finite objective value or gradient at an accepted iterate."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class InternalError(RuntimeError):
    """An internal consistency check failed (e.g. non-monotone shrinkage)."""
