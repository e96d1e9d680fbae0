"""Exception types raised across the package."""

import numpy as np


class SingularCovarianceError(np.linalg.LinAlgError):
    """Cholesky failed even after the jitter ladder was exhausted."""


class IndefiniteCovarianceError(ValueError):
    """A covariance has an eigenvalue below the semidefiniteness slack."""


class ConstraintViolationError(ValueError):
    """An augmentation covariance violates 0 <= delta <= sigma."""


class DegenerateWeightsError(ValueError):
    """All weights are zero (or every log-weight is -inf)."""


class ModelError(ValueError):
    """A state-space model was evaluated outside its domain."""


class ConfigError(ValueError):
    """Invalid filter or experiment configuration."""


class FilterRunError(RuntimeError):
    """A filter step failed; ``step`` is the 1-based time index of the failure."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"filter failed at step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
