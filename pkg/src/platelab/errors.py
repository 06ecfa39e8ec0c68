"""Exception hierarchy shared by all modules."""


class PlateLabError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(PlateLabError, ValueError):
    """A physical constant or geometry value lies outside its admissible domain."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DegenerateSymbolError(PlateLabError, ValueError):
    """The symbol is evaluated at a point where the requested reduction is undefined."""


class ResolutionError(PlateLabError, ValueError):
    """Too few collocation points for the requested construction."""


class UsageError(PlateLabError, ValueError):
    """An operation was called with an argument combination it does not support."""


class AssemblyError(PlateLabError):
    """The constraint block is rank deficient."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(rows)


class DiscretizationError(PlateLabError):
    """The energy Gram matrix is not positive on the constrained subspace."""


class NumericalError(PlateLabError):
    """A dense linear-algebra kernel failed or produced non-finite output."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class SingularityError(NumericalError):
    """The resolvent was requested at (or numerically at) an eigenvalue."""


class ConsistencyError(PlateLabError):
    """An internal invariant guaranteed by theory was violated numerically."""
