"""Exception types shared across the package."""

import numpy as np


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky failed even at the largest jitter in the schedule."""

    def __init__(self, msg, jitter=None):
        super().__init__(msg)
        self.jitter = jitter


class OptimizationError(RuntimeError):
    """Every optimizer restart failed."""


class NotTrainedError(RuntimeError):
    pass


class NumericalBlowupError(FloatingPointError):
    """Integration produced a non-finite state."""

    def __init__(self, msg, last_time=None):
        super().__init__(msg)
        self.last_time = last_time


class ModelFormatError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    pass


class RunFileError(OSError):
    """A run-directory file is missing or malformed."""
