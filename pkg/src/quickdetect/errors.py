"""Exception hierarchy shared by every module of the package."""


class QuickDetectError(Exception):
    """Base class for all package errors."""


class DomainError(QuickDetectError, ValueError):
    """An argument lies outside the domain of an operation."""


class TruncationError(QuickDetectError):
    """The breakpoint ladder did not reach the cutoff within the allowed count."""


class OutOfLadderError(QuickDetectError):
    """A point lies beyond the truncated breakpoint ladder."""


class QuadratureError(QuickDetectError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance.

    Attributes
    ----------
    achieved : float
        Error estimate that was actually reached.
    requested : float
        The tolerance that was asked for.
    """

    def __init__(self, message, achieved=float("nan"), requested=float("nan")):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class SolverError(QuickDetectError):
    """The free-boundary root could not be bracketed or located."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SimulationQualityError(QuickDetectError):
    """Too many Monte Carlo paths were censored by the horizon cap."""

    def __init__(self, message, censored=0, n_paths=0):
        super().__init__(message)
        self.censored = censored
        self.n_paths = n_paths
