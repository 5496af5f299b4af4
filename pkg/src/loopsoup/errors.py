"""Exception types shared across the package."""

from __future__ import annotations

import numpy as np


class SupercriticalError(ValueError):
    """Parameters lie on or beyond the critical surface, so Z is infinite."""

    def __init__(self, message: str, classification: str = "supercritical", detail=None):
        super().__init__(message)
        self.classification = classification
        self.detail = detail


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed; ``minor`` is the 1-based order of the failing leading minor."""

    def __init__(self, minor: int):
        super().__init__(f"matrix is not positive definite: leading minor of order {minor} is not positive")
        self.minor = minor


class EnumerationLimitError(MemoryError):
    """Exhaustive enumeration exceeded its configured cap."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class WrappingLoopError(ValueError):
    """A loop is not contractible in the planar patch, so its winding is undefined."""
