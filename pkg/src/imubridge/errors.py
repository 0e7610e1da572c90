class InvalidRotationError(ValueError):
    """A matrix that should be in SO(3) is not."""


class InvalidSequenceError(ValueError):
    """IMU samples are missing, non-finite, or not strictly increasing in time."""


class ConditioningError(ArithmeticError):
    """A conversion Jacobian is too ill-conditioned to invert."""


class ConventionError(ValueError):
    """Mismatched or unsupported perturbation convention / residual style."""
