"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime or model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import ConfigError, SobolError
from ..sampling import SeedStream
from . import experiment as ex

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--model", choices=ex.MODEL_IDS)
    p.add_argument("--estimator", action="append",
                   choices=(*ex.ESTIMATORS, "all"), help="repeatable; default all")
    p.add_argument("--n", type=int, help="pick-freeze base size")
    p.add_argument("--nonparam-n", type=int, help="regression sample size (default n(p+1))")
    p.add_argument("--reps", type=int, help="replications")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--kernel", choices=("epanechnikov", "gaussian"))
    p.add_argument("--bandwidth-scale", choices=("raw", "warped"))
    p.add_argument("--kprime", type=float, help="absolute K'; skips calibration")
    p.add_argument("--jcap", type=int, help="deepest wavelet level")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", type=Path, help="output CSV (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stochsobol", description="First-order Sobol index experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("estimate", "one run, every requested estimator"),
        ("replicate", "bias/MSE study over replications"),
        ("calibrate", "slope-heuristic sweep of K'"),
        ("sir-compare", "stochastic SIR against its ODE metamodel"),
        ("tornado", "one-at-a-time screen at the input midpoints"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "sir-compare":
            p.add_argument("--curve-points", type=int, default=41)
        if name == "tornado":
            p.add_argument("--tornado-reps", type=int, default=2000,
                           help="runs per endpoint for stochastic models")
    return parser


def load_config(args: argparse.Namespace) -> ex.ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON in {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config} must hold a JSON object")
    cfg = ex.ExperimentConfig.from_mapping(data)
    estimators = None
    if args.estimator:
        requested = tuple(dict.fromkeys(args.estimator))
        estimators = ex.ESTIMATORS if "all" in requested else requested
    if args.command == "sir-compare" and args.model is None and "model_id" not in data:
        args.model = "sir"
    return cfg.with_overrides(
        model_id=args.model, estimators=estimators, n=args.n, nonparam_n=args.nonparam_n,
        replications=args.reps, master_seed=args.seed, bandwidth=args.bandwidth,
        kernel=args.kernel, bandwidth_scale=args.bandwidth_scale, k_prime=args.kprime,
        j_cap=args.jcap, threads=args.threads,
        output_path=str(args.out) if args.out is not None else None,
    )


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def _emit(rows, path: str | None) -> None:
    if path is None:
        for row in rows:
            print(",".join(row))
    else:
        ex._write_rows(path, rows)


def _run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = cfg.output_path
    if args.command == "estimate":
        run, cal = ex.run_single(cfg)
        _emit(ex.estimate_rows(cfg, run), out)
    elif args.command == "replicate":
        report = ex.run_replications(cfg)
        _emit(ex.report_rows(report), out)
    elif args.command == "calibrate":
        cal = ex.calibrate(cfg)
        if out is None:
            print(f"k_prime,{cal.k_selected!r}")
        else:
            ex.emit_calibration(cal, out)
            print(f"selected k_prime {cal.k_selected!r}", file=sys.stderr)
    elif args.command == "sir-compare":
        cmp_ = ex.sir_compare(cfg, args.curve_points)
        rows = ex.report_rows(cmp_.stochastic) + ex.report_rows(cmp_.metamodel)[1:]
        _emit(rows, out)
        if out is not None:
            reports = (cmp_.stochastic, cmp_.metamodel)
            ex.emit_estimates(reports, _sibling(Path(out), "estimates"))
            ex.emit_curves(reports, _sibling(Path(out), "curves"))
    elif args.command == "tornado":
        model = ex.build_model(cfg.model_id)
        nominal = [s.midpoint for s in model.specs]
        reps = args.tornado_reps if model.stochastic else 1
        bars = ex.tornado(model, model.specs, nominal, np.mean, reps,
                          SeedStream(cfg.master_seed))
        rows = [("input", "y_low", "y_high", "width")]
        rows += [(b.input_name, repr(b.y_low), repr(b.y_high), repr(b.width)) for b in bars]
        _emit(rows, out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SobolError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
