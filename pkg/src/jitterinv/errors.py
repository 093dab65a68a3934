"""Exception types shared across the package."""


class JitterInvError(Exception):
    """Base class for all errors raised by jitterinv."""


class ValidationError(JitterInvError, ValueError):
    """An input violates a documented precondition."""


class DegenerateIntervalError(ValidationError):
    """A jitter interval has zero width (upper == lower).

    Raised when the deterministic mechanism (or window jitter with
    ``alpha == 1``) is handed to the analytic engine, which only deals
    with non-degenerate uniform delays.
    """


class CapacityError(JitterInvError):
    """The exponential term count would exceed the configured limit."""


class PrecisionError(JitterInvError, ArithmeticError):
    """The configured arithmetic could not meet the accuracy target."""


class ConvergenceError(JitterInvError, RuntimeError):
    """An iterative numerical method ran out of its evaluation budget."""
