"""Exception types shared across the package.

Numerical failures subclass :class:`NumericalError` so the CLI can map them
to a distinct exit status; contract violations stay plain ``ValueError``.
"""


class NumericalError(ArithmeticError):
    """Base for runtime numerical failures (underflow, NaN, refused updates)."""


class SinkhornUnderflowError(NumericalError):
    """A row or column sum underflowed to zero during Sinkhorn scaling."""

    def __init__(self, axis: str, index: int, eta: float):
        self.axis = axis
        self.index = index
        self.eta = eta
        super().__init__(
            f"{axis} {index} sum underflowed to 0 during Sinkhorn scaling (eta={eta})"
        )


class PoisonedUpdateError(NumericalError):
    """An optimizer step was refused because a gradient contained NaN."""


class TrainingAbortError(NumericalError):
    """Training aborted on a non-finite loss; message carries epoch/step."""


class RankError(ValueError):
    """Input matrix is numerically rank-deficient where full rank is required."""
