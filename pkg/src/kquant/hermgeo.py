"""Geometry of positive definite Hermitian matrices.

The open cone of N x N positive definite Hermitian matrices is a symmetric
space under congruence, carrying the scale-invariant inner product

    <V, W>_H = (1/N) tr(H^-1 V H^-1 W)

and geodesics

    H(t) = P expm(t A) P*,      H(0) = P P*,

with A Hermitian, so that geodesic speed and endpoint distance reduce to
eigenvalue data: the distance between H0 and H1 is the root mean square of
the log-eigenvalues of H0^-1 H1.  All matrix functions (sqrt, log, exp) go
through one primitive, the Hermitian eigendecomposition, applied in the
eigenbasis and reassembled; nothing here ever forms a matrix power series.

Positivity is certified by attempting a Cholesky factorization.  A failure
is an error: this module never clamps spectra to repair an input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    HermitianDefectError,
    NotPositiveDefiniteError,
)

# Conjugate-symmetry defects up to this relative size are repaired silently
# on construction; anything larger is treated as corrupted input.
HERMITIAN_DEFECT_TOL = 1e-12


def _coerce(entries) -> np.ndarray:
    a = np.asarray(getattr(entries, "array", entries), dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


def _symmetrized(a: np.ndarray) -> np.ndarray:
    scale = 1.0 + np.abs(a).max(initial=0.0)
    defect = np.abs(a - a.conj().T).max(initial=0.0)
    if defect > HERMITIAN_DEFECT_TOL * scale:
        raise HermitianDefectError(
            f"conjugate-symmetry defect {defect:.3e} exceeds "
            f"{HERMITIAN_DEFECT_TOL:.0e} * (1 + max|entry|) = {HERMITIAN_DEFECT_TOL * scale:.3e}"
        )
    return 0.5 * (a + a.conj().T)


class HermitianMatrix:
    """Validated Hermitian matrix; tiny asymmetries are symmetrized away."""

    __slots__ = ("array",)

    def __init__(self, entries):
        a = _symmetrized(_coerce(entries))
        a.setflags(write=False)
        self.array = a

    @property
    def shape(self):
        return self.array.shape

    def __repr__(self):
        return f"{type(self).__name__}(n={self.array.shape[0]})"


class PosDefMetric(HermitianMatrix):
    """Hermitian matrix certified positive definite via Cholesky."""

    __slots__ = ()

    def __init__(self, entries):
        super().__init__(entries)
        try:
            np.linalg.cholesky(self.array)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "Cholesky certification failed; matrix is not positive definite"
            ) from exc


def eigh_apply(fn, entries) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its eigenbasis."""
    a = _symmetrized(_coerce(entries))
    w, u = np.linalg.eigh(a)
    return (u * fn(w)) @ u.conj().T


def sym_sqrt(entries) -> np.ndarray:
    return eigh_apply(np.sqrt, entries)


def sym_log(entries) -> np.ndarray:
    """Principal logarithm; requires a positive spectrum."""
    a = _symmetrized(_coerce(entries))
    w, u = np.linalg.eigh(a)
    if w.min() <= 0.0:
        raise NotPositiveDefiniteError(
            f"logarithm needs a positive spectrum, min eigenvalue {w.min():.3e}"
        )
    return (u * np.log(w)) @ u.conj().T


def sym_exp(entries) -> np.ndarray:
    return eigh_apply(np.exp, entries)


@dataclass(frozen=True)
class MatrixGeodesic:
    """Curve t -> base_factor expm(t direction) base_factor*.

    ``eigenvalues`` caches the spectrum of ``direction``; it fixes the speed
    and, for curves of quantization metrics, the decay rates of the section
    frame along the curve.
    """

    base_factor: np.ndarray
    direction: np.ndarray
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        p = _coerce(self.base_factor)
        a = _symmetrized(_coerce(self.direction))
        if p.shape != a.shape:
            raise DimensionMismatchError("base factor and direction sizes differ")
        p.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "base_factor", p)
        object.__setattr__(self, "direction", a)
        w = np.linalg.eigvalsh(a)
        w.setflags(write=False)
        object.__setattr__(self, "eigenvalues", w)

    @property
    def size(self) -> int:
        return self.direction.shape[0]

    def __call__(self, t: float) -> PosDefMetric:
        return geodesic_eval(self, t)


def metric_inner(h, v, w) -> float:
    """Scale-invariant inner product (1/N) tr(H^-1 V H^-1 W) at base point H."""
    hm = PosDefMetric(h).array
    va = HermitianMatrix(v).array
    wa = HermitianMatrix(w).array
    if va.shape != hm.shape or wa.shape != hm.shape:
        raise DimensionMismatchError("tangent and base matrices must share a size")
    x = np.linalg.solve(hm, va)
    y = np.linalg.solve(hm, wa)
    val = np.trace(x @ y)
    return float(val.real) / hm.shape[0]


def geodesic_through(h0, h1) -> MatrixGeodesic:
    """Geodesic with value h0 at t=0 and h1 at t=1.

    Uses the Hermitian square root P = h0^(1/2) as the base factor, which
    pins down the (P, A) representation uniquely, and
    A = log(P^-1 h1 P^-1), Hermitian because the argument is a congruence
    of the positive matrix h1.
    """
    h0m = PosDefMetric(h0).array
    h1m = PosDefMetric(h1).array
    if h0m.shape != h1m.shape:
        raise DimensionMismatchError("endpoint sizes differ")
    w, u = np.linalg.eigh(h0m)
    if w.min() <= 0.0:
        raise NotPositiveDefiniteError("h0 eigendecomposition returned a nonpositive value")
    p = (u * np.sqrt(w)) @ u.conj().T
    p_inv = (u * (1.0 / np.sqrt(w))) @ u.conj().T
    middle = p_inv @ h1m @ p_inv
    a = sym_log(middle)
    return MatrixGeodesic(base_factor=p, direction=a)


def geodesic_eval(geod: MatrixGeodesic, t: float) -> PosDefMetric:
    """Value of the geodesic at parameter t; positive for every real t."""
    p = geod.base_factor
    e = sym_exp(t * geod.direction)
    return PosDefMetric(p @ e @ p.conj().T)


def geodesic_speed(geod: MatrixGeodesic) -> float:
    """Constant speed sqrt((1/N) tr A^2) of the curve."""
    lam = geod.eigenvalues
    return float(np.sqrt(np.mean(lam * lam)))


def hat_distance(h0, h1) -> float:
    """Distance sqrt((1/N) sum_i log^2 mu_i), mu_i the eigenvalues of h0^-1 h1.

    Computed from the generalized Hermitian eigenproblem h1 v = mu h0 v,
    which keeps the congruence invariance d(Q H0 Q*, Q H1 Q*) = d(H0, H1)
    at working precision.
    """
    h0m = PosDefMetric(h0).array
    h1m = PosDefMetric(h1).array
    if h0m.shape != h1m.shape:
        raise DimensionMismatchError("endpoint sizes differ")
    mu = scipy.linalg.eigh(h1m, h0m, eigvals_only=True)
    if mu.min() <= 0.0:
        raise NotPositiveDefiniteError("generalized spectrum not positive")
    logs = np.log(mu)
    return float(np.sqrt(np.mean(logs * logs)))
