"""Exception types raised across mixturekit."""


class MixtureKitError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MixtureKitError, ValueError):
    """An argument is outside the domain an operation accepts."""


class DegenerateSampleError(MixtureKitError, ValueError):
    """A sample carries too little spread for the requested operation."""


class NumericDomainError(MixtureKitError, ArithmeticError):
    """A numeric quantity left its valid domain (e.g. log of zero density)."""


class EmptySupportError(MixtureKitError, ValueError):
    """No grid point carries mass above the support threshold."""


class InfeasibleProblemError(MixtureKitError, ValueError):
    """The quadratic program has no nonnegative feasible point."""


class ConvergenceError(MixtureKitError, RuntimeError):
    """An iterative method stopped before reaching its tolerance.

    The best iterate found is kept on ``best`` so callers may inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ReplicationError(MixtureKitError, RuntimeError):
    """Too many Monte Carlo replications failed."""
