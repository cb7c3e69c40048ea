"""Exception hierarchy shared across the package."""


class ASPError(Exception):
    """Base class for all package errors."""


class EmptyCloud(ASPError):
    pass


class InvalidParameter(ASPError, ValueError):
    pass


class DegenerateGeometry(ASPError):
    pass


class StaleMap(ASPError):
    """Raised when geometry is read from a map that awaits a rebuild."""


class BackendError(ASPError):
    """A perception, classifier or agent backend failed to answer."""


class AffordanceDetectionFailed(ASPError):
    pass


class NoHorizontalNormal(ASPError):
    pass


class NoValidPose(ASPError):
    pass


class NavigationFailed(ASPError):
    pass


class UnknownTemplate(ASPError, KeyError):
    pass


class ProtocolError(ASPError):
    """Agent backend produced output that does not match the tool manifest."""


class InvariantViolation(ASPError):
    """Symbolic state broke one of its invariants (a bug, never user error)."""
