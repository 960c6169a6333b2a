"""Exception hierarchy shared across hamgeom."""


class HamGeomError(Exception):
    """Base class for all library errors."""


class JetDomainError(HamGeomError, ArithmeticError):
    """Elementary function evaluated outside its domain (log of a non-positive
    constant term, division by a zero constant term, ...)."""


class ParseError(HamGeomError, ValueError):
    """Syntax error in a Hamiltonian expression."""

    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class UnknownIdentifierError(ParseError):
    pass


class ModelError(HamGeomError, ValueError):
    """Invalid model family, parameters or dimensions."""


class NotConvexError(HamGeomError):
    """The momentum Hessian H^{ij} is not positive definite at the point."""


class SingularMetricError(HamGeomError):
    pass


class IllConditionedError(HamGeomError):
    pass


class StepFailure(HamGeomError):
    """ODE integration failed; ``last_time`` is the last good time reached."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class GridMismatchError(HamGeomError, ValueError):
    pass


class NoConvergenceError(HamGeomError):
    def __init__(self, message, best_miss=None):
        super().__init__(message)
        self.best_miss = best_miss


class SingularSensitivityError(HamGeomError):
    """The shooting Jacobian dq(T)/dp0 is rank deficient (conjugate point)."""


class NoBracketError(HamGeomError):
    pass


class NotIntegrableError(HamGeomError):
    pass


class NotEquilibriumError(HamGeomError):
    pass


class ConfigInvalid(HamGeomError):
    def __init__(self, message, location=""):
        super().__init__(message)
        self.location = location


class GridTooCoarseError(HamGeomError):
    """A periodic quadrature changed by more than its tolerance when the grid
    was halved."""
