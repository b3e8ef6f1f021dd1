"""Exception types shared across the package.

Parameter and shape violations raise plain ``ValueError``; the classes here
cover failures that carry extra state (the step at which something blew up)
or that callers may want to catch separately.
"""


class TrainingDivergenceError(RuntimeError):
    """Raised when a training loss becomes non-finite.

    ``step`` is the optimizer-step index at which the divergence occurred.
    """

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite training loss at step {step}")


class SamplingDivergenceError(RuntimeError):
    """Raised when an ancestral-sampling iterate becomes non-finite.

    ``t`` is the (0-based) schedule index at which the divergence occurred.
    """

    def __init__(self, t: int, message: str = ""):
        self.t = t
        super().__init__(message or f"non-finite sample at diffusion step t={t}")


class DegenerateDataError(ValueError):
    """Raised when a statistical test receives data it cannot rank
    (e.g. all paired differences are zero)."""
