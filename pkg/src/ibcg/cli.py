"""Command line entry point: ``ibcg {run, suite, check, rate}``.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import PRESETS, ConfigError, RunConfig, load_config, preset

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ibcg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_help="INI run configuration"):
        p.add_argument("--config", type=Path, help=config_help)
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")

    common(sub.add_parser("run", help="execute one run configuration"))
    p = sub.add_parser("suite", help="execute every *.ini in a directory")
    common(p, "directory of INI configurations")
    p.add_argument("--jobs", type=int, default=1)
    p = sub.add_parser("check", help="run the acceptance suite")
    p.add_argument("--only", type=str, help="comma-separated criterion numbers")
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; checks run serially")
    p = sub.add_parser("rate", help="fit the convergence rate over a grid of K")
    common(p)
    p.add_argument("--grid", type=str, default="100,1000,10000")
    p.add_argument("--law", choices=("logK_over_K", "inv_sqrtK"))
    return ap


def resolve_config(args) -> RunConfig:
    base = preset(args.preset) if args.preset else RunConfig()
    cfg = load_config(args.config, base) if args.config else base
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    from .solver import SolverError

    try:
        if args.command == "run":
            from .harness import run_experiment
            cfg = resolve_config(args)
            res = run_experiment(cfg, args.out)
            final = res.summary["final"]
            print(f"wrote {res.trace_path} and {res.summary_path}")
            print(json.dumps({k: v for k, v in final.items() if v is not None}))
        elif args.command == "suite":
            from .harness import run_suite
            if args.config is None or not args.config.is_dir():
                raise ConfigError("suite needs --config DIR with *.ini files")
            for path in run_suite(args.config, args.out, args.jobs):
                print(f"wrote {path}")
        elif args.command == "check":
            from .acceptance import run_acceptance
            nums = [int(s) for s in args.only.split(",")] if args.only else None
            results = run_acceptance(nums)
            failed = [r.number for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
            return EXIT_ACCEPTANCE if failed else EXIT_OK
        elif args.command == "rate":
            from .harness import rate_runs
            cfg = resolve_config(args)
            grid = [int(float(s)) for s in args.grid.split(",")]
            fit = rate_runs(cfg, grid, args.law)
            print(f"law={fit.law} slope={fit.slope:.4f} -> {'PASS' if fit.passed else 'FAIL'}")
            for K, v in zip(fit.Ks, fit.values):
                print(f"K={K} metric={v!r}")
            return EXIT_OK if fit.passed else EXIT_ACCEPTANCE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ArithmeticError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # invalid grids and parameter combinations surface here
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
