"""Exception types raised across the package."""


class WeightDegeneracyError(ValueError):
    """Every importance weight of a particle system is zero."""


class MixingViolationError(ValueError):
    """A strong-mixing constant of a finite HMM is zero."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class UnsupportedModelError(TypeError):
    """The requested construction has no closed form for this model kind."""


class InsufficientDataError(ValueError):
    """A statistic was requested on too few grid points or replicates."""


class DegenerateErrorSignal(ValueError):
    """All replicate errors are zero, so no convergence rate exists."""
