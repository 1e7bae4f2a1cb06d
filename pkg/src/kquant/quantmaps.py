"""Quantization maps between potentials and section metrics.

``hilb`` sends a potential u to the Gram matrix of the monomial sections
under the weighted reference volume,

    G_jk(u) = integral  <z^j, z^k>_ref  e^(-power * u)  d(reference),

diagonal for circle-invariant u by angular orthogonality and evaluated in
log space throughout, so large powers never overflow the quadrature.

``fs`` sends a positive section metric H back to a potential,

    fs(H) = (1/power) log sum_j |s_j|^2_ref,   {s_j} any H-orthonormal basis,

computed basis-free as (1/power) log v* H^-1 v from the section values v.
Along a matrix geodesic H(t) = P expm(tA) P* the same sum can be written in
the eigenframe of A as a log-sum-exp with slopes -t lambda_j, which is the
only stable evaluation once |t lambda| is large; ``fs_along_geodesic`` does
exactly that and agrees with fs(H(t)) where both are finite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .hermgeo import MatrixGeodesic, PosDefMetric
from .toric_cp1 import (
    InvariantPotential,
    LineBundleModel,
    ProductPotential,
    TwoDGrid,
    build_product_grid,
    same_grid,
)

_DIAG_RTOL = 1e-13


@dataclass(frozen=True)
class GramMatrix:
    """Positive section metric in the monomial frame of a model."""

    matrix: PosDefMetric
    model: LineBundleModel
    log_diag: np.ndarray | None = None

    def __post_init__(self):
        n = self.model.sections
        if self.matrix.shape != (n, n):
            raise DimensionMismatchError(
                f"Gram matrix of shape {self.matrix.shape} for a model with {n} sections"
            )
        if self.log_diag is not None:
            ld = np.asarray(self.log_diag, dtype=np.float64).copy()
            if ld.shape != (n,):
                raise DimensionMismatchError("log_diag length does not match the model")
            ld.setflags(write=False)
            object.__setattr__(self, "log_diag", ld)

    @property
    def is_diagonal(self) -> bool:
        a = self.matrix.array
        off = a - np.diag(np.diag(a))
        return np.abs(off).max(initial=0.0) <= _DIAG_RTOL * np.abs(np.diag(a)).max()


def _require_same_grid(u: InvariantPotential, model: LineBundleModel) -> None:
    if not same_grid(u.grid, model.grid):
        raise DimensionMismatchError("potential and model live on different grids")


def hilb_log_diag(u: InvariantPotential, model: LineBundleModel) -> np.ndarray:
    """Log of the diagonal Gram integrals, safe for any power and potential."""
    _require_same_grid(u, model)
    # reference mass element in log form: ref_density * weights collapses to
    # the raw Gauss-Legendre weights of the s variable
    log_mass = np.log(model.grid.weights * model.grid.ref_density)
    exponents = model.log_fiber - model.power * u.values[None, :] + log_mass[None, :]
    return logsumexp(exponents, axis=1)


def hilb(u: InvariantPotential, model: LineBundleModel) -> GramMatrix:
    """Gram matrix of the sections under the u-weighted reference volume."""
    lng = hilb_log_diag(u, model)
    if lng.max() > 700.0 or lng.min() < -700.0:
        raise NotPositiveDefiniteError(
            "Gram diagonal leaves the double range; use hilb_log_diag for this scale"
        )
    return GramMatrix(matrix=PosDefMetric(np.diag(np.exp(lng))), model=model, log_diag=lng)


def fs_from_log_diag(log_diag: np.ndarray, model: LineBundleModel) -> InvariantPotential:
    """Potential (1/power) log sum_j F_j / G_jj for a diagonal metric in logs."""
    log_diag = np.asarray(log_diag, dtype=np.float64)
    if log_diag.shape != (model.sections,):
        raise DimensionMismatchError("log_diag length does not match the model")
    vals = logsumexp(model.log_fiber - log_diag[:, None], axis=0) / model.power
    return InvariantPotential(vals, model.grid)


def _product_grid_for(model: LineBundleModel, n_theta: int | None) -> TwoDGrid:
    if n_theta is None:
        n_theta = max(64, 2 * model.degree + 2)
    return build_product_grid(model.grid, n_theta)


def _section_values_shifted(model: LineBundleModel, theta: np.ndarray):
    """Monomial section values with per-node amplitude shift factored out.

    Returns (v, shift) with v of shape (N, M, n_theta) and the true values
    equal to v * exp(shift), shift of shape (M,).
    """
    shift = 0.5 * model.log_fiber.max(axis=0)
    amp = np.exp(0.5 * model.log_fiber - shift[None, :])
    j = np.arange(model.sections)
    phase = np.exp(1j * np.outer(j, theta))
    v = amp[:, :, None] * phase[:, None, :]
    return v, shift


def fs(gram, model: LineBundleModel | None = None, n_theta: int | None = None):
    """Potential of a positive section metric.

    Diagonal metrics give an InvariantPotential; general Hermitian metrics
    depend on the angle and come back on the product grid.
    """
    if isinstance(gram, GramMatrix):
        if model is not None and model is not gram.model:
            raise DimensionMismatchError("explicit model conflicts with the Gram matrix model")
        model = gram.model
        if gram.is_diagonal:
            lng = gram.log_diag
            if lng is None:
                lng = np.log(np.diag(gram.matrix.array).real)
            return fs_from_log_diag(lng, model)
        h = gram.matrix.array
    else:
        if model is None:
            raise ValueError("fs needs a model when given a bare matrix")
        h = PosDefMetric(gram).array
        if h.shape != (model.sections, model.sections):
            raise DimensionMismatchError("matrix size does not match the model")
        d = np.diag(h)
        if np.abs(h - np.diag(d)).max() <= _DIAG_RTOL * np.abs(d).max():
            return fs_from_log_diag(np.log(d.real), model)

    grid2 = _product_grid_for(model, n_theta)
    v, shift = _section_values_shifted(model, grid2.theta)
    n, m, a = v.shape
    flat = v.reshape(n, m * a)
    cho = scipy.linalg.cho_factor(h, lower=True)
    sol = scipy.linalg.cho_solve(cho, flat)
    bergman = np.einsum("ik,ik->k", flat.conj(), sol).real.reshape(m, a)
    if bergman.min() <= 0.0:
        raise NotPositiveDefiniteError("Bergman sum lost positivity; metric too ill-conditioned")
    vals = (np.log(bergman) + 2.0 * shift[:, None]) / model.power
    return ProductPotential(vals, grid2)


def fs_along_geodesic(geod: MatrixGeodesic, t: float, model: LineBundleModel, n_theta: int | None = None):
    """fs of the geodesic at time t through the eigenframe of its direction.

    An H(0)-orthonormal section frame diagonalizing the direction decays at
    rates exp(-t lambda_j); the potential is their log-sum-exp, stable for
    arbitrarily large |t lambda| where forming H(t) itself would overflow.
    """
    if geod.size != model.sections:
        raise DimensionMismatchError("geodesic size does not match the model")
    p = geod.base_factor
    a = geod.direction
    lam, q = np.linalg.eigh(a)

    diag_p = np.abs(p - np.diag(np.diag(p))).max(initial=0.0) <= _DIAG_RTOL * np.abs(np.diag(p)).max()
    diag_a = np.abs(a - np.diag(np.diag(a))).max(initial=0.0) <= _DIAG_RTOL * (
        np.abs(np.diag(a)).max(initial=0.0) + 1e-300
    )
    if diag_p and diag_a:
        lam_d = np.diag(a).real
        log_b = model.log_fiber - 2.0 * np.log(np.abs(np.diag(p)))[:, None]
        vals = logsumexp(log_b - t * lam_d[:, None], axis=0) / model.power
        return InvariantPotential(vals, model.grid)

    grid2 = _product_grid_for(model, n_theta)
    v, shift = _section_values_shifted(model, grid2.theta)
    n, m, na = v.shape
    frame = q.conj().T @ np.linalg.solve(p, np.eye(n, dtype=np.complex128))
    b = np.einsum("jn,nk->jk", frame, v.reshape(n, m * na))
    with np.errstate(divide="ignore"):
        log_b2 = np.log(np.abs(b) ** 2)
    vals = logsumexp(log_b2 - t * lam[:, None], axis=0).reshape(m, na)
    vals = (vals + 2.0 * shift[:, None]) / model.power
    return ProductPotential(vals, grid2)


def bergman_roundtrip(u: InvariantPotential, model: LineBundleModel) -> InvariantPotential:
    """fs(hilb(u)); approaches u as the power grows, up to log(N)/power."""
    return fs_from_log_diag(hilb_log_diag(u, model), model)


# ---------------------------------------------------------------------------
# Gram serialization: dense CSV with alternating real/imag columns


def save_gram(gram: GramMatrix, path) -> None:
    a = gram.matrix.array
    n = a.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{part}{j}" for j in range(n) for part in ("re", "im")])
        for i in range(n):
            row: list[str] = []
            for j in range(n):
                row.append(f"{a[i, j].real:.17g}")
                row.append(f"{a[i, j].imag:.17g}")
            writer.writerow(row)


def load_gram(path, model: LineBundleModel) -> GramMatrix:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rows.append([float(c) for c in row])
    n = len(rows)
    a = np.empty((n, n), dtype=np.complex128)
    for i, row in enumerate(rows):
        if len(row) != 2 * n:
            raise ValueError("Gram CSV is not a square real/imag matrix")
        a[i] = np.asarray(row[0::2]) + 1j * np.asarray(row[1::2])
    return GramMatrix(matrix=PosDefMetric(a), model=model)
