"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` (and subclasses) to exit code 3.
"""


class CocError(Exception):
    """Base class for all package errors."""


class ValidationError(CocError, ValueError):
    """Input violates a documented invariant (shape, symmetry, disjointness...)."""


class NumericalError(CocError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class SingularMatrixError(NumericalError):
    """A matrix that must be invertible is singular even after jitter."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, *, iterations=None, score_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.score_norm = score_norm
