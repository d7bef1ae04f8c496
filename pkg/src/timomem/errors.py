"""Exception types shared across the package."""


class InadmissibleKernelError(ValueError):
    """Relaxation function violates a structural requirement (e.g. infinite mass)."""


class KernelRangeError(ValueError):
    """Tabulated kernel evaluated outside its table."""


class InadmissibleHistoryError(ValueError):
    """Prescribed history grows too fast for the memory integrals to converge."""


class NumericalError(RuntimeError):
    """Quadrature, bisection or time stepping failed to produce a finite answer."""


class FitError(RuntimeError):
    """Exponential-sum fit could not reach the requested tolerance.

    The best error reached is kept on ``best_error``.
    """

    def __init__(self, message, best_error=float("nan"), best=None):
        super().__init__(message)
        self.best_error = best_error
        self.best = best


class EnvelopeError(RuntimeError):
    """Decay envelope could not be assembled, or was used before validation."""


class ConfigError(ValueError):
    """Run configuration is malformed or contains unknown keys."""


class InsufficientDataError(ValueError):
    """Too few usable samples for a fit or comparison."""
