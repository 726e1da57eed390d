"""Exception hierarchy shared by all hypctrl modules."""


class HypCtrlError(Exception):
    """Base class for every error raised by hypctrl."""


class ParseError(HypCtrlError, ValueError):
    """Malformed configuration or input file.

    ``location`` names the offending field (e.g. ``"Q[2]"``) when known.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class DomainError(HypCtrlError, ValueError):
    """Breakpoints that do not span [0, 1] or are not increasing."""


class SignViolation(HypCtrlError, ValueError):
    """A speed vanishes, changes sign or falls below the epsilon floor."""


class OrderViolation(HypCtrlError, ValueError):
    """Speeds are not strictly ordered somewhere on [0, 1]."""


class RangeError(HypCtrlError, ValueError):
    """A time or position argument lies outside its admissible range."""


class DimensionMismatch(HypCtrlError, ValueError):
    """Matrix or data dimensions disagree with the speed profile."""


class PreconditionViolation(HypCtrlError, ValueError):
    """An operation was called on a system it is not defined for."""


class NumericalFailure(HypCtrlError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class NoConvergence(NumericalFailure):
    """Fixed-point iteration did not converge."""


class NearSingular(NumericalFailure):
    """A linear system is singular or too close to singular to trust."""


class IllConditioned(NumericalFailure):
    """Least-squares normal equations are too badly conditioned."""
