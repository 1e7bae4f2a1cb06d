import numpy as np
import pytest

import kquant.cli as cli
from kquant.harness import (
    ExperimentConfig,
    ExperimentReport,
    SeriesTable,
    Verdict,
    emit_report,
    fit_branch,
    haar_unitary,
    rate_band,
    parse_report,
    run_experiment,
    seeded_rng,
    spectrum,
)


def test_config_resolves_defaults():
    config = ExperimentConfig("quasigeo")
    assert config.degrees == (2, 4)
    assert config.tmax == 20.0
    assert ExperimentConfig("counterexample").tmax == 50.0
    assert ExperimentConfig("lipschitz").degrees == (8, 16, 32)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("no-such-experiment")
    with pytest.raises(ValueError):
        ExperimentConfig("quasigeo", degrees=(0,))
    with pytest.raises(ValueError):
        ExperimentConfig("quasigeo", grid_size=4)
    with pytest.raises(ValueError):
        ExperimentConfig("quasigeo", p=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig("quasigeo", delta=1.0)


def test_config_hash_ignores_output_path_only():
    base = ExperimentConfig("lipschitz", out=None)
    moved = ExperimentConfig("lipschitz", out="/tmp/somewhere")
    reseeded = ExperimentConfig("lipschitz", seed=1)
    assert base.sha256() == moved.sha256()
    assert base.sha256() != reseeded.sha256()
    assert "out" not in base.as_dict()


def test_seeded_rng_is_reproducible_and_keyed():
    config = ExperimentConfig("quasigeo")
    a = seeded_rng(config, 3).uniform(size=4)
    b = seeded_rng(config, 3).uniform(size=4)
    c = seeded_rng(config, 4).uniform(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_haar_unitary_is_unitary_and_deterministic():
    config = ExperimentConfig("quasigeo")
    q1 = haar_unitary(6, seeded_rng(config, 9))
    q2 = haar_unitary(6, seeded_rng(config, 9))
    assert np.array_equal(q1, q2)
    assert np.abs(q1 @ q1.conj().T - np.eye(6)).max() < 1e-12


def test_fit_branch_recovers_exact_affine_data():
    ts = np.linspace(0.5, 20.0, 40)
    fit = fit_branch(ts, 0.7 * ts + 0.2)
    assert fit.slope == pytest.approx(0.7, abs=1e-12)
    assert fit.intercept == pytest.approx(0.2, abs=1e-12)
    assert fit.rel_residual < 1e-12
    assert fit.burn_in == 0.0


def test_fit_branch_escalates_burn_in_past_a_transient():
    ts = np.linspace(0.5, 20.0, 80)
    # exponentially dying transient heavy enough to spoil the full-window fit
    fit = fit_branch(ts, 0.7 * ts + 0.2 + 20.0 * np.exp(-1.5 * ts))
    assert fit.burn_in == 5.0
    assert fit.slope == pytest.approx(0.7, rel=1e-3)
    assert fit.rel_residual < 1e-2


def test_spectrum_families():
    definite = spectrum("definite", 4)
    mixed = spectrum("mixed", 4)
    degenerate = spectrum("degenerate", 4)
    for lam in (definite, mixed, degenerate):
        assert lam.shape == (5,)
    assert definite.min() > 0.0
    assert mixed.min() < 0.0 < mixed.max()
    assert degenerate.min() == 0.0 and np.count_nonzero(degenerate == 0.0) == 1
    with pytest.raises(ValueError):
        spectrum("nope", 4)


def test_rate_band_values():
    lo, hi = rate_band(np.array([-1.0, 0.5, 3.0]), 2)
    assert lo == max(-1.0, -3.0) / 2
    assert hi == max(1.0, 3.0) / 2
    lo, hi = rate_band(np.array([1.0, 3.0]), 4)
    assert (lo, hi) == (0.25, 0.75)


def test_verdict_slack_orientation():
    upper = Verdict(name="a", passed=True, measured=0.2, bound=1.0, sense="<=")
    lower = Verdict(name="b", passed=True, measured=0.2, bound=0.1, sense=">")
    assert upper.slack == pytest.approx(0.8)
    assert lower.slack == pytest.approx(0.1)
    with pytest.raises(ValueError):
        Verdict(name="c", passed=True, measured=0.0, bound=0.0, sense="~")


def _tiny_report(out=None) -> ExperimentReport:
    config = ExperimentConfig("lipschitz", degrees=(8,), samples=3, out=out)
    return ExperimentReport(
        config=config,
        constants=(("alpha", 1.53), ("beta", -2.0)),
        verdicts=(
            Verdict(name="ok", passed=True, measured=0.1, bound=1.0, sense="<=", note="n"),
        ),
        series=(
            SeriesTable(name="empty", columns=("a", "b"), rows=np.empty((0, 2))),
            SeriesTable(name="vals", columns=("t", "y"), rows=[[0.0, 1.0], [0.5, np.pi]]),
        ),
    )


def test_emit_parse_round_trip_including_empty_series(tmp_path):
    report = _tiny_report()
    files = emit_report(report, tmp_path)
    assert sorted(files) == sorted(str(tmp_path / n) for n in (
        "lipschitz_empty.csv", "lipschitz_vals.csv", "summary.json"))
    # empty table emits a header-only CSV
    assert (tmp_path / "lipschitz_empty.csv").read_text() == "a,b\n"
    assert parse_report(tmp_path) == report


def test_emitted_bytes_are_identical_across_runs(tmp_path):
    config = ExperimentConfig("lipschitz", degrees=(8,), samples=10)
    dirs = (tmp_path / "one", tmp_path / "two")
    for d in dirs:
        emit_report(run_experiment(config), d)
    for name in ("summary.json", "lipschitz_ratios.csv"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_cli_end_to_end_writes_parseable_report(tmp_path, capsys):
    code = cli.main(
        ["lipschitz", "--degree", "8", "--samples", "5", "--out", str(tmp_path)]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out
    parsed = parse_report(tmp_path)
    assert parsed == run_experiment(
        ExperimentConfig("lipschitz", degrees=(8,), samples=5)
    )


def test_cli_exit_code_tracks_verdicts(monkeypatch, capsys):
    failing = ExperimentReport(
        config=ExperimentConfig("lipschitz"),
        constants=(),
        verdicts=(Verdict(name="bad", passed=False, measured=2.0, bound=1.0, sense="<="),),
        series=(),
    )
    monkeypatch.setattr(cli, "run_experiment", lambda config: failing)
    assert cli.main(["lipschitz"]) == 1
    assert "[FAIL] bad" in capsys.readouterr().out


def test_config_file_overrides_flags(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment line\nseed = 7\ndegrees = 8,16\n")
    parser = cli.build_parser()
    namespace = parser.parse_args(
        ["lipschitz", "--seed", "5", "--degree", "32", "--config", str(path)]
    )
    config = cli.build_config(namespace)
    assert config.seed == 7
    assert config.degrees == (8, 16)
    assert config.grid_size == 256  # untouched default survives


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("speling = 3\n")
    with pytest.raises(ValueError, match="speling"):
        cli.parse_config_file(path)
