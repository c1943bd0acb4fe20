"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, bath, or run configuration."""


class DegenerateNormError(ArithmeticError):
    """Variational state norm collapsed below representable range."""


class NonConvergenceError(RuntimeError):
    """No restart reached the convergence criteria.

    Carries the best partial result in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UnphysicalStateError(ValueError):
    """Inputs violate physicality beyond the numerical guard band."""


class DiscordBranchError(ArithmeticError):
    """Closed-form discord minimization produced an unphysical conditional state."""


class SignatureNotFoundError(RuntimeError):
    """No qualifying transition feature found in the scanned data."""


class CollapseError(RuntimeError):
    """Data collapse is infeasible (e.g. rescaled supports do not overlap)."""
