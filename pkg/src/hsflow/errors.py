"""Exception types raised across the package."""


class HSFlowError(Exception):
    """Base class for all package errors."""


class NotHypersymplectic(HSFlowError):
    """The wedge Gram matrix of a triple is not positive definite.

    ``index`` is the offending grid index (or ``None`` for a single point)
    and ``margin`` the smallest Gram eigenvalue found there.
    """

    def __init__(self, message, index=None, margin=None):
        super().__init__(message)
        self.index = index
        self.margin = margin


class SingularBase(HSFlowError):
    """Cholesky factorisation of a base point of the SPD space failed."""


class DegenerateMetric(HSFlowError):
    """A 4-metric is not positive definite."""


class StabilityLoss(HSFlowError):
    """The hypersymplectic margin collapsed during time stepping."""

    def __init__(self, message, t=None, margin=None):
        super().__init__(message)
        self.t = t
        self.margin = margin


class NonFiniteInput(HSFlowError, ValueError):
    pass


class OutOfOrder(HSFlowError):
    """Diagnostics records arrived with non-increasing time."""


class InsufficientData(HSFlowError):
    pass


class DomainCollapse(HSFlowError):
    """Strict convexity of the potential failed before the ODE blew up."""


class NonIntegrableAlpha(HSFlowError):
    """A non-constant S was requested for a chart triple."""


class DomainError(HSFlowError, ValueError):
    pass


class ConfigError(HSFlowError, ValueError):
    pass
