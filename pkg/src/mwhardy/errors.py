"""Shared exception types."""


class MwhardyError(Exception):
    """Base class for all toolkit errors."""


class NonHermitianError(MwhardyError):
    """Input matrix violates conjugate symmetry beyond tolerance."""


class SingularWeightError(MwhardyError):
    """A matrix sample is singular (eigenvalue below the relative floor)."""


class DomainError(MwhardyError):
    """Geometric precondition violated (empty or improper open set, ...)."""


class AlignmentError(MwhardyError):
    """Requested scale does not align with the sampling lattice."""


class ResolutionError(MwhardyError):
    """Requested scale is below what the grid can resolve."""


class ConstructionError(MwhardyError):
    """A fitted object failed its validation (reducing operator, ...)."""


class InsufficientRangeError(MwhardyError):
    """Not enough dilation levels fit inside the domain."""


class DegenerateMeasureError(MwhardyError):
    """Weighted Gram system too ill-conditioned to orthonormalize."""


class PreconditionError(MwhardyError):
    """An operation's stated precondition does not hold."""
