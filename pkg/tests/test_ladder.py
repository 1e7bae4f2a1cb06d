import json
import os

import numpy as np
import pytest
from scipy.special import logsumexp

from kquant.errors import CapExhaustedError
from kquant.ladder import (
    LadderConfig,
    budget_defect,
    run_ladder,
    save_report,
    verify_replay,
)
from kquant.toric_cp1 import InvariantPotential, build_grid, semipositive_big

GRID = build_grid(256)
BIG = semipositive_big()
TAU = GRID.log_nodes
PHI = BIG.weight_values(GRID)


def _log_poly(coeff: np.ndarray) -> InvariantPotential:
    """log of a positive fiberwise polynomial, a potential in the big class."""
    powers = np.arange(len(coeff), dtype=np.float64)[:, None] * TAU[None, :]
    return InvariantPotential(logsumexp(powers + np.log(coeff)[:, None], axis=0) - PHI, GRID)


U0 = _log_poly(np.array([1.0, 0.4, 1.3]))
U1 = _log_poly(np.array([0.7, 1.5, 0.5]))

CONFIG = LadderConfig(ell_max=4, delta=0.05, time_steps=32, grid_size=256)
REPORT = run_ladder(U0, U1, BIG, CONFIG)


def test_config_rungs_are_powers_of_two():
    assert CONFIG.rungs() == [1, 2, 4]
    assert LadderConfig(ell_max=7).rungs() == [1, 2, 4]
    assert LadderConfig(ell_max=8).rungs() == [1, 2, 4, 8]


def test_config_validation():
    with pytest.raises(ValueError):
        LadderConfig(ell_max=0)
    with pytest.raises(ValueError):
        LadderConfig(delta=0.0)
    with pytest.raises(ValueError):
        LadderConfig(grid_size=4)
    assert LadderConfig(tolerance_schedule={2: 0.1}).tolerance(2) == 0.1
    assert LadderConfig(tolerance_schedule={2: 0.1}).tolerance(4) == 0.25


def test_totals_strictly_decrease_up_the_ladder():
    totals = [r.total_error_on_K for r in REPORT.rungs]
    assert all(a > b for a, b in zip(totals, totals[1:]))


def test_per_step_errors_meet_their_tolerances():
    for rung in REPORT.rungs:
        tol = CONFIG.tolerance(rung.ell)
        assert rung.step2_error <= tol
        assert rung.step3_error <= tol
        assert rung.n_sections == rung.k_chosen * (2 * rung.ell + 1) + 1


def test_total_stays_within_step_budget():
    assert budget_defect(REPORT) <= 1e-12
    for rung in REPORT.rungs:
        assert rung.total_error_on_K <= rung.step1_error + 2.0 / rung.ell + 1e-9


def test_replay_is_bit_identical():
    assert verify_replay(REPORT, GRID)


def test_replay_detects_tampering():
    doctored = run_ladder(U0, U1, BIG, CONFIG)
    doctored.rungs[0].quantized = doctored.rungs[0].quantized + 1e-12
    assert not verify_replay(doctored, GRID)


def test_equal_endpoints_quantize_to_a_constant_path():
    report = run_ladder(U0, U0, BIG, LadderConfig(ell_max=2, grid_size=256))
    for rung in report.rungs:
        # interpolating identical log-Grams gives the same row at every time
        assert np.ptp(rung.quantized, axis=0).max() == 0.0


def test_unreachable_tolerance_raises_with_best_attempt():
    tight = min(r.step3_error for r in REPORT.rungs) * 0.5
    config = LadderConfig(
        ell_max=1, grid_size=256, k_cap=2, tolerance_schedule={1: tight}
    )
    with pytest.raises(CapExhaustedError) as err:
        run_ladder(U0, U1, BIG, config)
    assert err.value.best_index >= 1
    assert err.value.best_error > tight


def test_save_report_writes_summary_and_rung_surfaces(tmp_path):
    save_report(REPORT, tmp_path)
    summary = json.loads((tmp_path / "ladder_summary.json").read_text())
    assert summary["config"]["ell_max"] == 4
    assert [r["ell"] for r in summary["rungs"]] == [1, 2, 4]
    for rung in REPORT.rungs:
        csv_name = f"rung_ell{rung.ell}.csv"
        assert os.path.exists(tmp_path / csv_name)
