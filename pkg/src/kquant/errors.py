"""Shared exception types.

Numerical contract violations raise instead of degrading silently: a matrix
that fails its Cholesky certificate, boundary data outside the admissible
cone, or an iteration cap that runs out are all hard errors carrying enough
context to localize the failing step.
"""


class KquantError(Exception):
    """Base class for toolkit errors."""


class HermitianDefectError(KquantError, ValueError):
    """Conjugate-symmetry defect beyond the silent-repair tolerance."""


class NotPositiveDefiniteError(KquantError, ValueError):
    """Cholesky certification failed for a matrix required to be positive."""


class DimensionMismatchError(KquantError, ValueError):
    """Operands live on incompatible grids or matrix sizes."""


class NotPshError(KquantError, ValueError):
    """A potential's curvature density dips below -tol somewhere."""


class ConvergenceError(KquantError, RuntimeError):
    """An iterative solver hit its cap before reaching tolerance."""


class CapExhaustedError(KquantError, RuntimeError):
    """An index search exhausted its cap.

    Carries the best index/error achieved so callers can report instead of
    silently accepting an out-of-tolerance result.
    """

    def __init__(self, message: str, best_index: int, best_error: float):
        super().__init__(message)
        self.best_index = best_index
        self.best_error = best_error
