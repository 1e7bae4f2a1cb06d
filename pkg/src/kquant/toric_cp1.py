"""Circle-invariant model geometry on the projective line.

Everything is reduced through the log coordinate tau = log x, x = |z|^2.
A weight is a convex function W(tau); its curvature form has density
W''(tau) against d tau (x) d theta / 2 pi, so total mass equals the slope
range of W.  The two background forms are

    fubini_study:     phi(tau) = log(1 + e^tau),        mass 1,
    semipositive_big: phi(tau) = log(1 + e^(2 tau)),    mass 2,

the second being the pullback of the first under the squaring map; its
density vanishes at both poles, so it is semipositive and big but not a
metric form, and error reporting for it is restricted to the compact
windows delta <= x <= 1/delta.

Quadrature lives on Gauss-Legendre nodes of s in (0,1) pushed through
x = s/(1-s).  Under this substitution the reference volume integral of a
monomial fiber norm becomes a polynomial in s, so the Gram integrals of
the reference metric are exact at machine precision, not just converged.

Sections of the degree-d bundle are the monomials z^j with reference
fiber norms x^j / (1+x)^d; their binomial combination sums to one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, NotPshError

# Absolute tolerance on discrete curvature jumps below which a potential is
# still accepted as form-psh; violations beyond it raise NotPshError.
PSH_TOL = 1e-8

GRID_MATCH_TOL = 1e-12


def _fs_weight(tau: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, tau)


def _big_weight(tau: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, 2.0 * tau)


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre nodes on (0, infinity) via x = s/(1-s).

    ``weights`` integrate against d tau, so a density array rho gives
    integral sum(values * rho * weights).  ``ref_density`` samples the
    unit-mass reference density x/(1+x)^2 = s(1-s).
    """

    size: int
    s: np.ndarray
    nodes: np.ndarray
    log_nodes: np.ndarray
    weights: np.ndarray
    ref_density: np.ndarray

    def compact_mask(self, delta: float) -> np.ndarray:
        """Boolean mask of nodes with delta <= x <= 1/delta."""
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        return (self.nodes >= delta) & (self.nodes <= 1.0 / delta)


def build_grid(size: int = 256) -> QuadratureGrid:
    if size < 4:
        raise ValueError("grid size must be at least 4")
    y, wy = np.polynomial.legendre.leggauss(size)
    s = 0.5 * (y + 1.0)
    ws = 0.5 * wy
    x = s / (1.0 - s)
    tau = np.log(s) - np.log1p(-s)
    w_tau = ws / (s * (1.0 - s))
    ref = s * (1.0 - s)
    for a in (s, x, tau, w_tau, ref):
        a.setflags(write=False)
    return QuadratureGrid(size=size, s=s, nodes=x, log_nodes=tau, weights=w_tau, ref_density=ref)


def same_grid(a: QuadratureGrid, b: QuadratureGrid) -> bool:
    return a.size == b.size and np.array_equal(a.nodes, b.nodes)


@dataclass(frozen=True)
class BackgroundForm:
    """Reference (1,1)-form given by a convex weight in tau."""

    kind: str
    mass: float
    weight: Callable[[np.ndarray], np.ndarray]

    def weight_values(self, grid: QuadratureGrid) -> np.ndarray:
        return self.weight(grid.log_nodes)


def fubini_study() -> BackgroundForm:
    return BackgroundForm(kind="fubini_study", mass=1.0, weight=_fs_weight)


def semipositive_big() -> BackgroundForm:
    return BackgroundForm(kind="semipositive_big", mass=2.0, weight=_big_weight)


def total_mass(form: BackgroundForm, epsilon: float = 0.0) -> float:
    """Mass of form + epsilon * (unit reference form)."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    return form.mass + epsilon


def full_weight_values(form: BackgroundForm, grid: QuadratureGrid, epsilon: float = 0.0) -> np.ndarray:
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    w = form.weight_values(grid)
    if epsilon != 0.0:
        w = w + epsilon * _fs_weight(grid.log_nodes)
    return w


@dataclass(frozen=True)
class InvariantPotential:
    """Circle-invariant potential sampled at the grid nodes."""

    values: np.ndarray
    grid: QuadratureGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.shape != (self.grid.size,):
            raise DimensionMismatchError(
                f"potential has {v.shape} values for a grid of size {self.grid.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def shifted(self, c: float) -> "InvariantPotential":
        return InvariantPotential(self.values + c, self.grid)


def zero_potential(grid: QuadratureGrid) -> InvariantPotential:
    return InvariantPotential(np.zeros(grid.size), grid)


def sup_diff(u: InvariantPotential, v: InvariantPotential, mask: np.ndarray | None = None) -> float:
    if not same_grid(u.grid, v.grid):
        raise DimensionMismatchError("potentials live on different grids")
    d = np.abs(u.values - v.values)
    if mask is not None:
        d = d[mask]
    return float(d.max())


def _curvature_jumps(psi: np.ndarray, tau: np.ndarray, mass: float) -> np.ndarray:
    """Slope increments of psi with end slopes clamped to the moment interval.

    Telescoping makes the jumps sum to ``mass`` exactly, so derived measures
    conserve total mass by construction; negative jumps mean the data is not
    convex (not form-psh) there.
    """
    slopes = np.diff(psi) / np.diff(tau)
    jumps = np.empty_like(psi)
    jumps[0] = slopes[0] - 0.0
    jumps[1:-1] = np.diff(slopes)
    jumps[-1] = mass - slopes[-1]
    return jumps


def ma_density(
    u: InvariantPotential,
    form: BackgroundForm,
    epsilon: float = 0.0,
    tol: float = PSH_TOL,
    check: bool = True,
) -> np.ndarray:
    """Discrete density of (form_eps + dd^c u) against the grid weights.

    Second differences of the full weight plus u, normalized per node so
    that integrate(1, density) telescopes to the class mass exactly.
    """
    grid = u.grid
    psi = full_weight_values(form, grid, epsilon) + u.values
    jumps = _curvature_jumps(psi, grid.log_nodes, total_mass(form, epsilon))
    if check and jumps.min() < -tol:
        raise NotPshError(
            f"potential is not {form.kind}-psh: curvature jump {jumps.min():.3e} < -{tol:.0e}"
        )
    return jumps / grid.weights


def density_defect(u: InvariantPotential, form: BackgroundForm, epsilon: float = 0.0) -> float:
    """Most negative curvature jump; >= 0 means discretely form-psh."""
    psi = full_weight_values(form, u.grid, epsilon) + u.values
    jumps = _curvature_jumps(psi, u.grid.log_nodes, total_mass(form, epsilon))
    return float(jumps.min())


def in_positive_class(u: InvariantPotential, form: BackgroundForm, epsilon: float = 0.0) -> bool:
    """Strict discrete positivity of the curvature of form_eps + dd^c u."""
    return density_defect(u, form, epsilon) > 0.0


def integrate(values: np.ndarray, density: np.ndarray, grid: QuadratureGrid) -> float:
    """Quadrature sum of values against density * weights."""
    values = np.asarray(values, dtype=np.float64)
    density = np.asarray(density, dtype=np.float64)
    if values.shape != (grid.size,) or density.shape != (grid.size,):
        raise DimensionMismatchError("values/density length does not match the grid")
    return float(np.sum(values * density * grid.weights))


# ---------------------------------------------------------------------------
# Line bundle models


@dataclass(frozen=True)
class LineBundleModel:
    """Monomial section model of a positive line bundle over the line.

    ``degree`` counts sections minus one (the slope range of the reference
    weight); ``power`` is the tensor power against which potentials are
    scaled in the quantization maps.  For the plain Fubini-Study bundle the
    two coincide; the ladder quantizes power k of a degree-(2l+1) bundle.
    """

    degree: int
    power: int
    grid: QuadratureGrid
    weight_fn: Callable[[np.ndarray], np.ndarray]
    log_fiber: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be at least 1")
        if self.power < 1:
            raise ValueError("power must be at least 1")
        tau = self.grid.log_nodes
        w = self.weight_fn(tau)
        j = np.arange(self.degree + 1)
        lf = j[:, None] * tau[None, :] - w[None, :]
        lf.setflags(write=False)
        object.__setattr__(self, "log_fiber", lf)

    @property
    def sections(self) -> int:
        return self.degree + 1

    def fiber_norm(self, j: int, x) -> np.ndarray:
        """Squared reference fiber norm of the j-th monomial section at x >= 0."""
        if not 0 <= j <= self.degree:
            raise ValueError(f"section index {j} outside 0..{self.degree}")
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        pos = x > 0.0
        tau = np.log(x[pos])
        out[pos] = np.exp(j * tau - self.weight_fn(tau))
        if j == 0:
            # weights vanish at the zero pole, so the constant section has unit norm there
            w0 = float(self.weight_fn(np.array([-745.0]))[0])
            out[~pos] = np.exp(-w0)
        return float(out[0]) if scalar else out


def build_model(degree: int, grid_size: int = 256, grid: QuadratureGrid | None = None) -> LineBundleModel:
    """Reference model: degree-d power of the Fubini-Study bundle."""
    g = grid if grid is not None else build_grid(grid_size)
    d = int(degree)
    return LineBundleModel(degree=d, power=d, grid=g, weight_fn=lambda tau: d * _fs_weight(tau))


def quantizing_model(ell: int, k: int, grid: QuadratureGrid) -> LineBundleModel:
    """Power k of the twisted bundle with curvature l * big + reference.

    Degree k(2l+1); the Fubini-Study factor keeps the weight strictly
    convex even where the big form degenerates.
    """
    ell = int(ell)
    k = int(k)
    if ell < 1 or k < 1:
        raise ValueError("ell and k must be positive")
    return LineBundleModel(
        degree=k * (2 * ell + 1),
        power=k,
        grid=grid,
        weight_fn=lambda tau: k * (ell * _big_weight(tau) + _fs_weight(tau)),
    )


# ---------------------------------------------------------------------------
# Product quadrature for potentials that depend on the angle


@dataclass(frozen=True)
class TwoDGrid:
    """Product of the radial grid with a uniform periodic angle grid."""

    base: QuadratureGrid
    n_theta: int
    theta: np.ndarray

    @property
    def shape(self):
        return (self.base.size, self.n_theta)


def build_product_grid(base: QuadratureGrid, n_theta: int = 64) -> TwoDGrid:
    if n_theta < 4:
        raise ValueError("need at least 4 angular nodes")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    theta.setflags(write=False)
    return TwoDGrid(base=base, n_theta=n_theta, theta=theta)


@dataclass(frozen=True)
class ProductPotential:
    """Potential sampled on the (x, theta) product grid."""

    values: np.ndarray
    grid2d: TwoDGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.shape != self.grid2d.shape:
            raise DimensionMismatchError(
                f"values shape {v.shape} does not match product grid {self.grid2d.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def promote(u: InvariantPotential, grid2d: TwoDGrid) -> ProductPotential:
    if not same_grid(u.grid, grid2d.base):
        raise DimensionMismatchError("potential grid does not match the product base")
    return ProductPotential(np.repeat(u.values[:, None], grid2d.n_theta, axis=1), grid2d)


def ma_density_2d(
    u: ProductPotential,
    form: BackgroundForm,
    epsilon: float = 0.0,
    tol: float = PSH_TOL,
    check: bool = True,
) -> np.ndarray:
    """Curvature density of a non-invariant potential on the product grid.

    Radial part: per-angle slope jumps of the full weight plus u.  Angular
    part: quarter of the spectral second derivative in theta (the factor
    comes from tau = 2 log r).  The angular term has exact zero mean per
    radius, so total mass still telescopes to the class mass.
    """
    grid = u.grid2d.base
    n_theta = u.grid2d.n_theta
    mass = total_mass(form, epsilon)
    psi = full_weight_values(form, grid, epsilon)[:, None] + u.values

    slopes = np.diff(psi, axis=0) / np.diff(grid.log_nodes)[:, None]
    jumps = np.empty_like(psi)
    jumps[0] = slopes[0]
    jumps[1:-1] = np.diff(slopes, axis=0)
    jumps[-1] = mass - slopes[-1]
    radial = jumps / grid.weights[:, None]

    m = np.fft.fftfreq(n_theta, d=1.0 / n_theta)
    u_hat = np.fft.fft(u.values, axis=1)
    angular = np.fft.ifft(-(m**2) * u_hat, axis=1).real

    density = radial + 0.25 * angular
    if check:
        low = (density * grid.weights[:, None]).min()
        if low < -tol:
            raise NotPshError(f"product potential not {form.kind}-psh: jump {low:.3e}")
    return density


def integrate_2d(values: np.ndarray, density: np.ndarray, grid2d: TwoDGrid) -> float:
    """Product quadrature: radial weights times uniform angular average."""
    values = np.asarray(values, dtype=np.float64)
    density = np.asarray(density, dtype=np.float64)
    if values.shape != grid2d.shape or density.shape != grid2d.shape:
        raise DimensionMismatchError("values/density shape does not match the product grid")
    w = grid2d.base.weights[:, None]
    return float(np.sum(values * density * w) / grid2d.n_theta)


# ---------------------------------------------------------------------------
# Potential serialization (two-column CSV)


def save_potential(u: InvariantPotential, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "u"])
        for x, v in zip(u.grid.nodes, u.values):
            writer.writerow([f"{x:.17g}", f"{v:.17g}"])


def load_potential(path, grid: QuadratureGrid) -> InvariantPotential:
    xs: list[float] = []
    vs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["x", "u"]:
            raise ValueError(f"unexpected potential CSV header {header!r}")
        for row in reader:
            xs.append(float(row[0]))
            vs.append(float(row[1]))
    x = np.asarray(xs)
    if x.shape != grid.nodes.shape or np.abs(x - grid.nodes).max() > GRID_MATCH_TOL * (1.0 + np.abs(grid.nodes).max()):
        raise DimensionMismatchError("CSV nodes do not match the target grid")
    return InvariantPotential(np.asarray(vs), grid)
