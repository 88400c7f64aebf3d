"""Exception types shared across the package."""


class RatecheckError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RatecheckError, ValueError):
    """Invalid kind, parameters, or experiment configuration."""


class DomainError(RatecheckError, ValueError):
    """Query point outside the certified domain ball."""


class DivergedError(RatecheckError, RuntimeError):
    """SGD produced a non-finite or out-of-guard iterate.

    Carries the first bad step index in ``t``.
    """

    def __init__(self, t: int, message: str = ""):
        self.t = int(t)
        super().__init__(message or f"trajectory diverged at step t={t}")


class NotConvergedError(RatecheckError, RuntimeError):
    """Iterative solver hit its cap before reaching tolerance.

    Carries the achieved gradient norm in ``grad_norm``.
    """

    def __init__(self, grad_norm: float, iterations: int):
        self.grad_norm = float(grad_norm)
        self.iterations = int(iterations)
        super().__init__(
            f"solver stopped at grad norm {grad_norm:.3e} after {iterations} iterations"
        )


class TheoremPreconditionError(RatecheckError, ValueError):
    """Sweep configuration does not satisfy the preconditions of the target rate."""
