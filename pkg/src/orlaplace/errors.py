"""Exception types raised across the package."""


class OrlaplaceError(Exception):
    """Base class for all package errors."""


class NonPositiveArgument(OrlaplaceError):
    """A structure function was evaluated at t <= 0 where t > 0 is required."""


class DegenerateDerivative(OrlaplaceError):
    """phi'(t) vanished at a point where a ratio against it is needed."""


class InadmissibleFamily(OrlaplaceError):
    """A constructed family violates the two-sided growth bounds."""


class DomainViolation(OrlaplaceError):
    """A mollified function was evaluated below its lower domain bound."""


class GridTooSmall(OrlaplaceError):
    """The grid has too few nodes for the requested stencil."""


class KernelUnderResolved(OrlaplaceError):
    """The field-smoothing radius is under-resolved by the grid spacing."""


class BoundViolation(OrlaplaceError):
    """A sampled auxiliary function broke its proven envelope."""


class BoundaryMismatch(OrlaplaceError):
    """A candidate field disagrees with the prescribed boundary values."""


class LinearSolveFailure(OrlaplaceError):
    """The inner linear solve failed to produce a usable direction."""


class BallOutOfDomain(OrlaplaceError):
    """A ball pair does not fit inside the grid interior with margin."""


class ClosenessViolated(OrlaplaceError):
    """The sampled closeness supremum breaks the dimensional threshold."""


class CutoffNotCompact(OrlaplaceError):
    """A cutoff function is nonzero on the boundary collar."""


class ConfigError(OrlaplaceError):
    """An experiment configuration failed validation."""
