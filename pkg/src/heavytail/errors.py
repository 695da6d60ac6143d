"""Exception types raised across the package."""


class HeavyTailError(Exception):
    """Base class for package errors."""


class PreconditionError(HeavyTailError, ValueError):
    """An argument violates an operation's precondition (e.g. n < 1)."""


class IntegrationError(HeavyTailError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


class RootBracketError(HeavyTailError, ArithmeticError):
    """A root could not be bracketed inside the representable range."""


class DomainError(HeavyTailError, ValueError):
    """The operation is undefined for these parameters (e.g. a power tail at alpha=2)."""


class TooFewObservations(PreconditionError):
    def __init__(self, n: int, required: int):
        super().__init__(f"need at least {required} finite observations, got {n}")
        self.n = n
        self.required = required


class DegenerateSpread(HeavyTailError, ValueError):
    """The interquartile range of the sample is zero."""


class SolverFailure(HeavyTailError, ArithmeticError):
    """A moment/L-moment equation system has no solution in the model family."""


class EmptySupport(HeavyTailError, ValueError):
    """A binned divergence was requested with no empirical mass, or mass where the model has none."""


class SchemaMismatch(HeavyTailError, ValueError):
    """An input file does not follow the documented column layout."""


class UnreadableInput(HeavyTailError, OSError):
    """An input file is missing, unreadable, or not valid UTF-8."""
