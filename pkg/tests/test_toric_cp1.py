import numpy as np
import pytest

from kquant.errors import DimensionMismatchError, NotPshError
from kquant.toric_cp1 import (
    InvariantPotential,
    build_grid,
    build_model,
    build_product_grid,
    density_defect,
    fubini_study,
    full_weight_values,
    in_positive_class,
    integrate,
    integrate_2d,
    load_potential,
    ma_density,
    ma_density_2d,
    promote,
    quantizing_model,
    save_potential,
    semipositive_big,
    sup_diff,
    total_mass,
    zero_potential,
)

GRID = build_grid(256)
FS = fubini_study()
BIG = semipositive_big()


def test_class_masses():
    assert total_mass(FS) == 1.0
    assert total_mass(BIG) == 2.0
    assert total_mass(BIG, epsilon=0.25) == 2.25


def test_reference_density_integrates_to_mass():
    for form, eps in ((FS, 0.0), (BIG, 0.0), (BIG, 0.1)):
        density = ma_density(zero_potential(GRID), form, epsilon=eps)
        total = integrate(np.ones(GRID.size), density, GRID)
        assert abs(total - total_mass(form, eps)) < 1e-12


def test_quadrature_against_analytic_moment():
    """int softplus(tau) d(curvature of softplus) = int_0^1 -ln(1-s) ds = 1.

    The slope-jump measure is a second-order discretization of the smooth
    curvature, so the moment only matches to O(h^2), not machine precision.
    """
    density = ma_density(zero_potential(GRID), FS)
    phi = full_weight_values(FS, GRID)
    assert abs(integrate(phi, density, GRID) - 1.0) < 1e-4


def test_density_mass_exact_for_any_psh_input():
    tau = GRID.log_nodes
    # smooth strictly convex fiber potential with slopes inside (0, 1)
    psi = 0.5 * np.logaddexp(0.0, tau) + 0.5 * np.logaddexp(0.0, 2.0 * (tau - 1.0)) / 2.0
    u = InvariantPotential(psi - full_weight_values(FS, GRID), GRID)
    density = ma_density(u, FS)
    assert abs(integrate(np.ones(GRID.size), density, GRID) - 1.0) < 1e-12
    # strictly convex input => every discrete curvature jump is positive
    assert density_defect(u, FS) > 0.0
    assert in_positive_class(u, FS)


def test_piecewise_linear_density_localizes_at_kinks():
    tau = GRID.log_nodes
    psi = np.maximum.reduce([np.full_like(tau, 0.2), 0.3 * tau + 0.1, 0.8 * tau - 1.0])
    u = InvariantPotential(psi - full_weight_values(FS, GRID), GRID)
    density = ma_density(u, FS)
    mass_nodes = np.nonzero(density * GRID.weights > 1e-13)[0]
    # two interior kinks plus the right-end clamp onto the moment interval
    assert len(mass_nodes) <= 6
    assert abs(integrate(np.ones(GRID.size), density, GRID) - 1.0) < 1e-12


def test_moment_interval_clamp_rejects_oversteep():
    phi = full_weight_values(FS, GRID)
    with pytest.raises(NotPshError):
        ma_density(InvariantPotential(0.6 * phi, GRID), FS)  # right slope 1.6 > 1
    tau = GRID.log_nodes
    with pytest.raises(NotPshError):
        # negative slope at the left end of the moment interval
        ma_density(InvariantPotential(0.6 * np.logaddexp(0.0, -tau), GRID), FS)


def test_concave_bump_rejected():
    tau = GRID.log_nodes
    with pytest.raises(NotPshError):
        ma_density(InvariantPotential(-0.2 * np.exp(-(tau**2)), GRID), FS)
    assert not in_positive_class(InvariantPotential(-0.2 * np.exp(-(tau**2)), GRID), FS)


def test_compact_mask_window():
    mask = GRID.compact_mask(0.05)
    tau = GRID.log_nodes
    edge = np.log(1.0 / 0.05)
    assert np.all(np.abs(tau[mask]) <= edge + 1e-12)
    assert np.all(np.abs(tau[~mask]) > edge - 1e-12)
    assert mask.sum() > 0.2 * GRID.size


def test_model_shapes_and_degree_identity():
    model = build_model(4, grid=GRID)
    assert model.sections == 5
    assert model.power == 4
    assert model.log_fiber.shape == (5, GRID.size)
    lifted = quantizing_model(ell=2, k=3, grid=GRID)
    assert lifted.degree == 3 * (2 * 2 + 1)
    assert lifted.power == 3
    assert lifted.sections == lifted.degree + 1


def test_invariant_potential_validation():
    with pytest.raises(DimensionMismatchError):
        InvariantPotential(np.zeros(8), GRID)
    with pytest.raises(ValueError):
        InvariantPotential(np.full(GRID.size, np.nan), GRID)


def test_shifted_changes_values_only():
    u = zero_potential(GRID).shifted(1.5)
    assert np.all(u.values == 1.5)
    assert sup_diff(u, zero_potential(GRID)) == 1.5


def test_promoted_density_matches_invariant():
    grid2 = build_product_grid(GRID, n_theta=16)
    tau = GRID.log_nodes
    psi = 0.7 * np.logaddexp(0.0, tau) + 0.3 * np.logaddexp(0.0, tau - 2.0)
    u = InvariantPotential(psi - full_weight_values(FS, GRID), GRID)
    flat = ma_density(u, FS)
    product = ma_density_2d(promote(u, grid2), FS)
    assert np.abs(product - flat[:, None]).max() < 1e-10
    total = integrate_2d(np.ones(grid2.shape), product, grid2)
    assert abs(total - 1.0) < 1e-12


def test_angular_term_preserves_mass():
    grid2 = build_product_grid(GRID, n_theta=32)
    base = promote(zero_potential(GRID), grid2)
    wiggle = 0.01 * np.cos(grid2.theta)[None, :] * np.exp(-GRID.log_nodes[:, None] ** 2)
    u = type(base)(base.values + wiggle, grid2)
    density = ma_density_2d(u, FS, check=False)
    assert abs(integrate_2d(np.ones(grid2.shape), density, grid2) - 1.0) < 1e-12


def test_save_load_roundtrip(tmp_path):
    tau = GRID.log_nodes
    u = InvariantPotential(0.1 * np.logaddexp(0.0, tau), GRID)
    path = tmp_path / "potential.csv"
    save_potential(u, path)
    back = load_potential(path, GRID)
    assert np.array_equal(back.values, u.values)
