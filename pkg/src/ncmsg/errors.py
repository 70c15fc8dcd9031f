"""Exception hierarchy shared by the package."""


class NCMSGError(Exception):
    """Base class for all package errors."""


class DimensionError(NCMSGError, ValueError):
    """Array shapes do not agree with the declared (p, n)."""


class InvalidPointError(NCMSGError, ValueError):
    """A parameter point violates a manifold constraint."""


class NotTangentError(NCMSGError, ValueError):
    """A vector is not in the tangent space at its base point."""


class StepTooLargeError(NCMSGError):
    """A retraction step leaves the manifold."""


class DegenerateDataError(NCMSGError):
    """Samples do not support the requested estimate."""


class ConvergenceError(NCMSGError):
    """An iterative method ran out of iterations; carries the last iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class StallError(NCMSGError):
    """The line search found no admissible step; carries the best iterate and its report."""

    def __init__(self, message, theta=None, report=None):
        super().__init__(message)
        self.theta = theta
        self.report = report


class DatasetError(NCMSGError, ValueError):
    """A dataset on disk is missing or malformed."""
