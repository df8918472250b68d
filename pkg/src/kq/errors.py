"""Exception types shared across the package."""


class KqError(Exception):
    """Base class for all package errors."""


class NonConvexInput(KqError):
    """A potential violates the discrete convexity invariant."""


class SlopeOutOfRange(KqError):
    """Difference quotients of a potential leave the admissible slope range."""


class GridMismatch(KqError):
    """Two fields were combined on incompatible grids."""


class NoSubsolution(KqError):
    """Boundary data admits no admissible subsolution."""


class MaxIterExceeded(KqError):
    """An iterative solver ran out of iterations.

    Carries the last residual so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularForm(KqError):
    """A Hermitian form is numerically singular or not positive definite."""


class DimensionMismatch(KqError):
    """Operands live on spaces of different dimension."""


class QuadratureUnderflow(KqError):
    """All quadrature mass fell outside the truncated grid."""


class ZeroEvaluation(KqError):
    """A candidate Finsler metric vanishes on a nonzero vector."""


class BoundaryNotPsh(KqError):
    """Boundary Finsler data is not fiberwise plurisubharmonic."""


class BoundaryNotNorm(KqError):
    """Boundary Finsler data is not fiberwise a norm."""


class InsufficientStrength(KqError):
    """The background metric fails the strict negativity certificate."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class IoFailure(KqError):
    """An output artifact could not be written."""


class ConfigError(KqError):
    """An experiment configuration is invalid."""
