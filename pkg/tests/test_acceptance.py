"""End-to-end acceptance checks, one test per contract item.

Each test exercises a full pipeline at its stated tolerance and prints a
single summary line with the measured values, so a verbose run reads as a
checklist.  Experiment-level items go through ``run_experiment`` with the
default configs; the cached helper keeps each experiment to a single run.
"""

import time
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.special import betaln

from kquant.harness import (
    ExperimentConfig,
    emit_report,
    rate_band,
    run_experiment,
)
from kquant.hermgeo import MatrixGeodesic, geodesic_through, hat_distance
from kquant.mabuchi import (
    boundary_gaps,
    compare_with_sweep,
    convexity_defect,
    dp_endpoint_detail,
    time_lipschitz,
    weak_geodesic,
)
from kquant.quantmaps import fs, fs_along_geodesic, hilb
from kquant.toric_cp1 import (
    InvariantPotential,
    build_grid,
    build_model,
    fubini_study,
    full_weight_values,
    zero_potential,
)


@lru_cache(maxsize=None)
def _experiment(name: str) -> tuple:
    start = time.perf_counter()
    report = run_experiment(ExperimentConfig(name))
    return report, time.perf_counter() - start


def _random_pd(rng: np.random.Generator, size: int) -> np.ndarray:
    g = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    return g @ g.conj().T + size * np.eye(size)


def test_symmetric_space_distance_exactness():
    """100 seeded pairs: closed form, congruence invariance, 2nd-order ODE."""
    start = time.perf_counter()
    rng = np.random.default_rng(20260814)
    worst_closed = 0.0
    worst_congruent = 0.0
    for _ in range(100):
        size = int(rng.integers(2, 17))
        h0, h1 = _random_pd(rng, size), _random_pd(rng, size)
        mu = scipy.linalg.eigh(h1, h0, eigvals_only=True)
        closed = float(np.sqrt(np.mean(np.log(mu) ** 2)))
        worst_closed = max(worst_closed, abs(hat_distance(h0, h1) - closed))
        g = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        moved = hat_distance(g @ h0 @ g.conj().T, g @ h1 @ g.conj().T)
        worst_congruent = max(worst_congruent, abs(moved - hat_distance(h0, h1)))
    assert worst_closed <= 1e-9
    assert worst_congruent <= 1e-9

    geod = geodesic_through(_random_pd(rng, 6), _random_pd(rng, 6))

    def residual(dt: float) -> float:
        worst = 0.0
        for t in (0.25, 0.5, 0.75):
            plus, center, minus = (geod(s).array for s in (t + dt, t, t - dt))
            second = (plus - 2.0 * center + minus) / dt**2
            vel = (plus - minus) / (2.0 * dt)
            worst = max(worst, np.abs(second - vel @ np.linalg.solve(center, vel)).max())
        return worst

    ratio = residual(1e-2) / residual(5e-3)
    assert 3.0 <= ratio <= 5.0
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(
        f"[PASS] symmetric space: closed-form dev {worst_closed:.2e} <= 1e-9, "
        f"congruence dev {worst_congruent:.2e} <= 1e-9, "
        f"halving ratio {ratio:.2f} ~ 4, {elapsed:.2f}s < 5s"
    )


def test_quantization_map_oracles():
    """Gram diagonal against the beta integral; roundtrip constant at zero."""
    start = time.perf_counter()
    grid = build_grid(512)
    worst_gram = 0.0
    worst_const = 0.0
    for d in (2, 4, 8):
        model = build_model(d, grid=grid)
        gram = hilb(zero_potential(grid), model)
        j = np.arange(d + 1, dtype=np.float64)
        oracle = np.exp(betaln(j + 1.0, d + 1.0 - j))
        worst_gram = max(worst_gram, np.abs(np.diag(gram.matrix.array) - oracle).max())
        roundtrip = fs(gram)
        dev = np.abs(roundtrip.values - np.log(d + 1.0) / d).max()
        worst_const = max(worst_const, float(dev))
    assert worst_gram <= 1e-9
    assert worst_const <= 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(
        f"[PASS] quantization maps: Gram dev {worst_gram:.2e} <= 1e-9, "
        f"roundtrip constant dev {worst_const:.2e} <= 1e-8, {elapsed:.2f}s < 5s"
    )


def test_section_rate_band_for_diagonal_directions():
    """Sup-norm increments stay inside the eigenvalue rate band, 1e-9 slack."""
    grid = build_grid(256)
    rng = np.random.default_rng(20260814)
    ts = np.arange(-5.0, 5.25, 0.5)
    center = int(np.argmin(np.abs(ts)))
    worst = 0.0
    for d in (1, 2, 4):
        model = build_model(d, grid=grid)
        for _ in range(20):
            lam = rng.uniform(-2.0, 2.0, d + 1)
            geod = MatrixGeodesic(
                base_factor=np.eye(d + 1, dtype=np.complex128),
                direction=np.diag(lam).astype(np.complex128),
            )
            lo, hi = rate_band(lam, d)
            us = [fs_along_geodesic(geod, float(t), model).values for t in ts]
            sups = np.array([np.abs(u - us[center]).max() for u in us])
            for sel in (ts >= 0.0, ts <= 0.0):
                bt, bs = np.abs(ts[sel]), sups[sel]
                order = np.argsort(bt)
                rates = np.diff(bs[order]) / np.diff(bt[order])
                worst = max(worst, float((lo - rates).max()), float((rates - hi).max()))
    assert worst <= 1e-9
    print(f"[PASS] rate band: worst excursion {worst:.2e} <= 1e-9 over 60 directions")


def test_bounded_pair_with_growing_matrix_distance():
    """One decaying section: endpoint functional saturates, matrix speed does not."""
    report, elapsed = _experiment("counterexample")
    assert report.passed
    assert report.table("series").rows.shape[0] > 20
    by_name = {v.name: v for v in report.verdicts}
    assert by_name["hat_grows_linearly"].measured <= 1e-10
    assert by_name["tv_beyond_10"].measured <= 1e-2
    assert by_name["quasi_is_false"].passed
    assert elapsed < 10.0
    print(
        f"[PASS] saturating pair: TV {by_name['tv_beyond_10'].measured:.2e} <= 1e-2, "
        f"matrix-speed dev {by_name['hat_grows_linearly'].measured:.2e} <= 1e-10, "
        f"quasi-geodesy FALSE, {elapsed:.2f}s < 10s"
    )


def test_quasi_geodesic_fits_for_definite_and_mixed_spectra():
    """Affine control of the endpoint functional at degrees 2 and 4."""
    report, _ = _experiment("quasigeo")
    assert report.passed
    lines = []
    for d in (2, 4):
        for family in ("definite", "mixed"):
            for suffix in ("", "_haar"):
                cell = f"{family}_d{d}{suffix}"
                c_fit = report.constant(f"C_fit_{cell}")
                residual = report.constant(f"rel_residual_{cell}")
                assert c_fit > 0.0
                assert residual < 1e-2
                assert report.constant(f"comparison_{cell}") <= 1.0 + 1e-12
                lines.append(f"{cell}: C={c_fit:.3f} resid={residual:.1e}")
        assert report.constant(f"C_fit_degenerate_d{d}") <= 1e-3
    print("[PASS] quasi-geodesic fits: " + "; ".join(lines))


def test_contraction_of_endpoint_functional_at_high_degree():
    report, _ = _experiment("lipschitz")
    assert report.passed
    by_name = {v.name: v for v in report.verdicts}
    final = by_name["contraction_at_d32"]
    assert final.measured < 1.0
    assert by_name["max_ratio_nonincreasing"].passed
    print(
        f"[PASS] contraction: max ratio at degree 32 is {final.measured:.4f} < 1, "
        f"non-increasing over degrees 8/16/32"
    )


def test_quantized_path_error_decays_like_log_over_degree():
    report, elapsed = _experiment("bergman")
    assert report.passed
    by_name = {v.name: v for v in report.verdicts}
    spread0 = by_name["scaled_ratio_pair0"].measured
    spread1 = by_name["scaled_ratio_pair1"].measured
    assert max(spread0, spread1) <= 4.0
    assert elapsed < 60.0
    print(
        f"[PASS] quantized-path decay: errors decreasing, scaled spreads "
        f"{spread0:.2f}, {spread1:.2f} <= 4, {elapsed:.1f}s < 60s"
    )


def test_weak_geodesic_solver_quality():
    grid = build_grid(256)
    fs_form = fubini_study()
    tau = grid.log_nodes
    phi = full_weight_values(fs_form, grid)
    u0 = InvariantPotential(
        0.6 * np.logaddexp(0.0, tau) + 0.4 * np.logaddexp(0.0, tau - 1.0) - phi, grid
    )
    u1 = InvariantPotential(
        0.5 * np.logaddexp(0.0, tau) + 0.25 * np.logaddexp(0.0, 2.0 * (tau + 0.7)) - phi, grid
    )
    surface = weak_geodesic(u0, u1, fs_form, time_steps=64)

    gaps = boundary_gaps(surface)
    assert gaps == (0.0, 0.0)
    convexity = convexity_defect(surface)
    assert convexity >= -1e-8
    lip = time_lipschitz(surface)
    assert lip["max_rate"] <= lip["bound"] + 1e-6
    spread = dp_endpoint_detail(surface, 2.0).spread
    assert spread <= 0.02

    coarse = build_grid(64)
    phi_c = full_weight_values(fs_form, coarse)
    tau_c = coarse.log_nodes
    a = InvariantPotential(
        0.6 * np.logaddexp(0.0, tau_c) + 0.4 * np.logaddexp(0.0, tau_c - 1.0) - phi_c, coarse
    )
    b = InvariantPotential(
        0.5 * np.logaddexp(0.0, tau_c) + 0.25 * np.logaddexp(0.0, 2.0 * (tau_c + 0.7)) - phi_c,
        coarse,
    )
    sweep_gap = compare_with_sweep(weak_geodesic(a, b, fs_form, time_steps=16))
    assert sweep_gap <= 0.125
    print(
        f"[PASS] weak geodesic: boundary exact, convexity {convexity:.1e} >= -1e-8, "
        f"rate {lip['max_rate']:.4f} <= {lip['bound']:.4f}+1e-6, "
        f"speed spread {spread:.3%} <= 2%, sweep gap {sweep_gap:.2e} <= 0.125"
    )


def test_quantization_ladder_budget_and_replay():
    report, elapsed = _experiment("ladder")
    assert report.passed
    rungs = report.table("rungs").rows
    by_name = {v.name: v for v in report.verdicts}
    assert by_name["totals_strictly_decreasing"].passed
    assert by_name["budget_within_schedule"].measured <= 1e-9
    assert by_name["replay_bit_identical"].passed
    assert elapsed < 600.0
    print(
        f"[PASS] ladder: totals strictly decreasing over {rungs.shape[0]} rungs, "
        f"budget defect {by_name['budget_within_schedule'].measured:.2e} <= 1e-9, "
        f"replay bit-identical, {elapsed:.1f}s < 600s"
    )


def test_reports_are_byte_identical_across_reruns(tmp_path):
    checked = 0
    for name, overrides in (
        ("counterexample", {}),
        ("lipschitz", {"degrees": (8,), "samples": 10}),
    ):
        dirs = (tmp_path / f"{name}_one", tmp_path / f"{name}_two")
        written = []
        for d in dirs:
            config = ExperimentConfig(name, **overrides)
            written.append(sorted(emit_report(run_experiment(config), d)))
        assert [p.rsplit("/", 1)[1] for p in written[0]] == [
            p.rsplit("/", 1)[1] for p in written[1]
        ]
        for left, right in zip(*written):
            assert open(left, "rb").read() == open(right, "rb").read()
            checked += 1
    print(f"[PASS] determinism: {checked} emitted files byte-identical across reruns")
