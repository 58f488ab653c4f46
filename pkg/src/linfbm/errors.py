"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class LinFBMError(Exception):
    """Base class for all library errors."""


class DomainError(LinFBMError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class SingularityError(DomainError):
    """Evaluation at a point where the quantity diverges."""


class UsageError(LinFBMError, ValueError):
    """Inconsistent inputs (grid mismatch, wrong grid kind, bad config)."""


class NumericalError(LinFBMError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class MeasureOverflowError(NumericalError, OverflowError):
    """exp(tail mass) is not representable as a float."""

    def __init__(self, message, tail_mass=None, time=None):
        super().__init__(message)
        self.tail_mass = tail_mass
        self.time = time


class StabilityError(NumericalError):
    """A cell of the discretization carries too much drift mass."""


class AccuracyError(NumericalError):
    """A truncation cannot meet the requested accuracy.

    ``required`` carries the parameter value (e.g. a horizon) that would.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class RefusalError(LinFBMError):
    """A check refuses to run because its hypotheses do not hold."""
