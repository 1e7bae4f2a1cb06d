"""Command-line front end: one subcommand per named experiment.

Precedence is defaults, then command-line flags, then the optional
``--config`` file: the file is plain ``key=value`` text whose entries
override flags, so a checked-in config pins a run regardless of how the
command was invoked.  Exit status is 0 exactly when every verdict passed.
"""

from __future__ import annotations

import argparse
import sys

from .harness import EXPERIMENTS, ExperimentConfig, emit_report, run_experiment


def _parse_degrees(text: str) -> tuple[int, ...]:
    parts = text.replace(",", " ").split()
    return tuple(int(p) for p in parts)


# config-file key -> (config field, coercion)
_FILE_KEYS = {
    "degree": ("degrees", _parse_degrees),
    "degrees": ("degrees", _parse_degrees),
    "grid": ("grid_size", int),
    "grid_size": ("grid_size", int),
    "p": ("p", float),
    "tmax": ("tmax", float),
    "samples": ("samples", int),
    "seed": ("seed", int),
    "delta": ("delta", float),
    "out": ("out", str),
}


def parse_config_file(path) -> dict:
    """Read ``key=value`` lines; '#' starts a comment, blank lines ignored."""
    overrides: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _FILE_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            field, coerce = _FILE_KEYS[key]
            overrides[field] = coerce(value)
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kquant",
        description="deterministic numerical experiments for the quantization toolkit",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--degree", action="append", type=int, metavar="D",
                        help="model degree or level (repeatable)")
        sp.add_argument("--grid", type=int, metavar="M", help="radial quadrature size")
        sp.add_argument("--p", type=float, help="distance exponent (default 2)")
        sp.add_argument("--tmax", type=float, help="half-width of the time window")
        sp.add_argument("--samples", type=int, help="random pairs per cell")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--delta", type=float, help="compact window parameter")
        sp.add_argument("--out", type=str, help="directory for CSV and summary output")
        sp.add_argument("--config", type=str, metavar="FILE",
                        help="key=value file; entries override flags")
    return parser


def build_config(namespace: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if namespace.degree is not None:
        values["degrees"] = tuple(namespace.degree)
    for flag, field in (
        ("grid", "grid_size"),
        ("p", "p"),
        ("tmax", "tmax"),
        ("samples", "samples"),
        ("seed", "seed"),
        ("delta", "delta"),
        ("out", "out"),
    ):
        flagged = getattr(namespace, flag)
        if flagged is not None:
            values[field] = flagged
    if namespace.config is not None:
        values.update(parse_config_file(namespace.config))
    return ExperimentConfig(experiment=namespace.experiment, **values)


def main(argv=None) -> int:
    namespace = build_parser().parse_args(argv)
    config = build_config(namespace)
    report = run_experiment(config)
    for v in report.verdicts:
        status = "PASS" if v.passed else "FAIL"
        note = f"  [{v.note}]" if v.note else ""
        print(f"[{status}] {v.name}: {v.measured:.6g} {v.sense} {v.bound:.6g} "
              f"(slack {v.slack:.3g}){note}")
    total = len(report.verdicts)
    good = sum(v.passed for v in report.verdicts)
    print(f"{config.experiment}: {good}/{total} verdicts passed  "
          f"(config {config.sha256()[:12]})")
    if config.out is not None:
        written = emit_report(report, config.out)
        print(f"report written: {len(written)} files in {config.out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
