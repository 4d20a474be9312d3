"""Exception hierarchy shared by all modules."""


class IsodeformError(Exception):
    """Base class for every error raised by the package."""


class DomainError(IsodeformError, ValueError):
    """An argument lies outside the admissible range."""


class IncompatibleSpaceError(IsodeformError, ValueError):
    """Two spline spaces are not nested or do not share a basis."""


class CompatibilityError(IsodeformError, ValueError):
    """A boundary shell violates side compatibility."""


class DimensionError(IsodeformError, ValueError):
    pass


class NonBijectiveStateError(IsodeformError):
    """A Jacobian determinant is not positive where it must be.

    ``element`` holds the offending element index (or patch index for
    multi-patch checks) when known.
    """

    def __init__(self, message, element=None, min_jacobian=None):
        super().__init__(message)
        self.element = element
        self.min_jacobian = min_jacobian


class InitialDomainError(IsodeformError):
    """The Coons patch of the simplified boundary folds."""

    def __init__(self, message, quality=None, patch=None):
        super().__init__(message)
        self.quality = quality
        self.patch = patch


class StallError(IsodeformError):
    """Adaptive step halving exhausted without restoring bijectivity."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergenceError(IsodeformError):
    """Newton iterations did not reach the tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TopologyError(IsodeformError, ValueError):
    pass


class GeometryFileError(IsodeformError, ValueError):
    """Malformed geometry file; the message names the field at fault."""
