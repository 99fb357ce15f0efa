"""The ``zoq`` command line.

Subcommands::

    zoq run <config-or-preset> [-o DIR] [--paper-scale]
    zoq verify [--quick] [--self-test-fail] [-o CSV]
    zoq plot <summary.csv>... -o DIR
    zoq presets list

Exit codes: 0 success, 1 verification or run failure, 2 usage/config
error.  The environment variable ``ZOQ_SEED`` overrides the config seed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from ..analysis import verification_battery
from ..core import SeededRng
from ..errors import ConfigurationError
from .config import load_config
from .plot import plot_summaries
from .presets import preset_config, preset_names
from .runner import run_experiment, write_csv

_VERIFY_SEED = 987123


def _err(msg: str) -> None:
    print(f"zoq: {msg}", file=sys.stderr)


def _seed_override() -> int | None:
    raw = os.environ.get("ZOQ_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"ZOQ_SEED must be an integer, got {raw!r}")


def cmd_run(args) -> int:
    try:
        if args.config in preset_names():
            cfg = preset_config(args.config, paper_scale=args.paper_scale)
        else:
            if args.paper_scale:
                _err("--paper-scale applies to presets only")
                return 2
            cfg = load_config(args.config)
        result = run_experiment(cfg, out_dir=args.out, seed=_seed_override())
    except ConfigurationError as exc:
        _err(str(exc))
        return 2
    n_traj = sum(len(oc.trajectories) for oc in result.outcomes)
    print(f"wrote {len(result.outcomes)} combo files + summary to "
          f"{result.out_dir} ({n_traj} completed replications)")
    if result.all_failed:
        _err("all replications diverged for at least one combo")
        return 1
    return 0


def cmd_verify(args) -> int:
    n = 10_000 if args.quick else 100_000
    t0 = time.perf_counter()
    results = verification_battery(SeededRng(_VERIFY_SEED), n_samples=n,
                                   inject_wrong_constant=args.self_test_fail)
    elapsed = time.perf_counter() - t0
    wide = max(len(r.name) for r in results)
    print(f"{'check':<{wide}}  {'d':>3} {'q':>3} {'target':>12} "
          f"{'empirical':>12} {'z':>8}  result")
    failures = 0
    for r in results:
        status = "pass" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{r.name:<{wide}}  {r.d:>3} {r.q:>3} {r.target:>12.6g} "
              f"{r.empirical:>12.6g} {r.z_score:>8.2f}  {status}")
    print(f"{len(results) - failures}/{len(results)} checks passed "
          f"({n} samples per check, {elapsed:.1f}s)")
    if args.out:
        write_csv(args.out, results[0].csv_header(),
                  [r.csv_row() for r in results])
    return 1 if failures else 0


def cmd_plot(args) -> int:
    try:
        written = plot_summaries([Path(p) for p in args.summaries], args.out)
    except (ConfigurationError, FileNotFoundError) as exc:
        _err(str(exc))
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_presets(args) -> int:
    if args.action != "list":
        _err(f"unknown presets action {args.action!r}")
        return 2
    for name in preset_names():
        cfg = preset_config(name)
        print(f"{name:<12} {cfg.objective.kind:<20} d={cfg.objective.dim:<5} "
              f"K={list(cfg.budgets)} R={cfg.replications}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zoq",
        description="Query-budgeted zeroth-order optimization bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config or preset")
    p_run.add_argument("config", help="path to a TOML config, or a preset name")
    p_run.add_argument("-o", "--out", default=None,
                       help="output directory (default: from config)")
    p_run.add_argument("--paper-scale", action="store_true",
                       help="use the d=1000 variant of a preset")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify",
                              help="run the estimator moment/MSE battery")
    p_verify.add_argument("--quick", action="store_true",
                          help="10k Monte Carlo samples instead of 100k")
    p_verify.add_argument("--self-test-fail", action="store_true",
                          help="inject a wrong constant; the battery must fail")
    p_verify.add_argument("-o", "--out", default=None,
                          help="also write the check table as CSV")
    p_verify.set_defaults(func=cmd_verify)

    p_plot = sub.add_parser("plot", help="render summary CSVs as SVG")
    p_plot.add_argument("summaries", nargs="+", help="summary.csv files")
    p_plot.add_argument("-o", "--out", required=True, help="output directory")
    p_plot.set_defaults(func=cmd_plot)

    p_presets = sub.add_parser("presets", help="inspect built-in presets")
    p_presets.add_argument("action", choices=["list"])
    p_presets.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        _err(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
