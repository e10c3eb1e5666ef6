"""Exception hierarchy shared by all modules."""


class RollingError(Exception):
    """Base class for errors raised by this package."""


class DomainError(RollingError):
    """A point lies outside the chart domain of a manifold."""


class BoundaryError(DomainError):
    """A curve or finite-difference stencil left the chart domain.

    ``time`` is the first grid time at which the violation was seen, when the
    error comes from a curve integration.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegeneracyError(RollingError):
    """The metric is singular or not positive definite."""


class RankError(RollingError):
    """Vectors expected to be independent are (numerically) dependent."""


class CompositionError(RollingError):
    """Two rollings cannot be composed because their intermediate curves differ."""


class VerificationError(RollingError):
    """A computed rolling failed its residual checks."""
