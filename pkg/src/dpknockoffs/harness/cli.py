"""Command-line entry point: ``dpknockoffs <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from .. import __version__, theory
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import metadata_block, real_data_run, run, theory_overlay

_OVERRIDES = ("n", "p", "s0", "sigma", "mu", "epsilon", "delta", "r", "lam", "C_lambda", "q",
              "plus", "t_fixed", "repetitions", "seed", "n_mc", "workers", "mechanism",
              "sigma_mode", "fdr_grid", "response")


def _add_common(sp):
    sp.add_argument("--config", help="key = value configuration file")
    sp.add_argument("--output", "-o", help="CSV output path (default: stdout)")
    for key in _OVERRIDES:
        sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                        help=f"override '{key}' (comma list for grids)")


def _config(args, scenario=None) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    if scenario is not None:
        over["scenario"] = scenario
    elif getattr(args, "scenario", None):
        over["scenario"] = args.scenario
    if args.output:
        over["output"] = args.output
    return cfg.override(**over)


def _emit(text, output, cfg=None):
    if output:
        Path(output).write_text(text, encoding="utf-8")
        if cfg is not None:
            manifest = metadata_block(cfg, {
                "package_version": __version__, "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__,
            })
            Path(str(output) + ".manifest.txt").write_text(manifest, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    cfg = _config(args)
    _emit(run(cfg).to_csv(), args.output, cfg)


def cmd_theory(args):
    cfg = _config(args)
    _emit(theory_overlay(cfg).to_csv(), args.output, cfg)


def cmd_compare(args):
    cfg = _config(args, "mechanism-compare")
    _emit(run(cfg).to_csv(), args.output, cfg)


def cmd_real_data(args):
    cfg = _config(args, "real-data").override(data=args.csv)
    _emit(real_data_run(args.csv, cfg).to_csv(), args.output, cfg)


def _table(rows, fields):
    import io
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    wr.writeheader()
    for row in rows:
        wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_check_conditions(args):
    points = []
    for p in args.p:
        if args.example == 1:
            points.append(theory.example1_point(p))
        elif args.example == 2:
            points.append(theory.example2_point(p, args.c0))
        else:
            points.append(dict(n=args.n, p=p, s0=args.s0, r=args.r, epsilon=args.epsilon,
                               delta=args.delta))
    rows = []
    for pt in points:
        rep = theory.check_debias_conditions(**pt, sigma=args.sigma, C_lambda=args.C_lambda)
        rows.append({"p": pt["p"], "n": pt["n"], "r": pt["r"], "s0": pt["s0"], **rep.as_row()})
    _emit(_table(rows, list(rows[0])), args.output)


def cmd_regime(args):
    rows = []
    for a in args.alpha:
        for g in args.gamma:
            res = theory.regime_feasible(a, g)
            lo = min(res.feasible_betas) if res.feasible else math.nan
            hi = max(res.feasible_betas) if res.feasible else math.nan
            rows.append({"alpha": a, "gamma": g, "feasible": res.feasible, "beta_min": lo, "beta_max": hi})
    _emit(_table(rows, ["alpha", "gamma", "feasible", "beta_min", "beta_max"]), args.output)


def _floats(text):
    return [float(v) for v in text.split(",")]


def build_parser():
    ap = argparse.ArgumentParser(prog="dpknockoffs", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run a simulation scenario")
    sp.add_argument("--scenario", default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("theory", help="theoretical FDP/power overlay")
    sp.add_argument("--scenario", default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("compare", help="JLT vs Gaussian-mechanism power (G1/G2/G3)")
    _add_common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("real-data", help="repeated private selection on a CSV dataset")
    sp.add_argument("csv")
    _add_common(sp)
    sp.set_defaults(func=cmd_real_data)

    sp = sub.add_parser("check-conditions", help="evaluate the debiasing sufficient conditions")
    sp.add_argument("--example", type=int, choices=(0, 1, 2), default=1,
                    help="1 or 2 for the built-in scaling ladders, 0 for explicit parameters")
    sp.add_argument("--p", type=lambda s: [int(float(v)) for v in s.split(",")], default=[256, 512, 1024, 2048])
    sp.add_argument("--n", type=float, default=1e5)
    sp.add_argument("--r", type=float, default=1500)
    sp.add_argument("--s0", type=float, default=10)
    sp.add_argument("--epsilon", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--c0", type=float, default=0.1)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--C-lambda", dest="C_lambda", type=float, default=1.0)
    sp.add_argument("--output", "-o")
    sp.set_defaults(func=cmd_check_conditions)

    sp = sub.add_parser("regime", help="exponent-regime feasibility scan")
    sp.add_argument("--alpha", type=_floats, default=[2.5, 3.1, 2.1])
    sp.add_argument("--gamma", type=_floats, default=[0.6, 0.1, 0.8])
    sp.add_argument("--output", "-o")
    sp.set_defaults(func=cmd_regime)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
