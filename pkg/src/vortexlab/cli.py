"""Command-line entry point: run, sweep-mach, converge, report.

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures (the path of the last good checkpoint goes to stderr).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ConfigError, VortexLabError
from .harness import parse_config, run_convergence, run_mach_sweep, run_single
from .reporting import report_directory


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vortexlab", description="vortex-layer numerical laboratory")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config (INI)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker pool size for sweeps")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="force deterministic reduction mode (also the default)",
        )

    common(sub.add_parser("run", help="single evolution run with diagnostics"))
    p = sub.add_parser("sweep-mach", help="Mach sweep plus incompressible reference")
    common(p)
    p.add_argument("--eps-list", default=None, help="comma-separated eps values")
    p = sub.add_parser("converge", help="refinement study against an exact solution")
    common(p)
    p.add_argument("--refine-list", default=None, help="comma-separated n3 values")
    p = sub.add_parser("report", help="re-derive fits and render figures from an existing run")
    p.add_argument("--out", required=True, help="existing run or sweep directory")
    p.add_argument("--window", default=None, help="fit window lo,hi")
    p.add_argument("--series", default=None, help="comma-separated series names to fit")
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.verb == "report":
            window = None
            if args.window:
                lo, hi = (float(v) for v in args.window.split(","))
                window = (lo, hi)
            names = args.series.split(",") if args.series else None
            outputs = report_directory(args.out, window=window, names=names)
            print(json.dumps({k: v for k, v in outputs.items() if k != "figures"}, indent=2, default=str))
            for f in outputs.get("figures", []):
                print(f"wrote {f}")
            return 0
        cfg = parse_config(args.config)
        if args.threads is not None:
            cfg = dataclasses.replace(cfg, threads=args.threads)
        if getattr(args, "deterministic", False):
            cfg = dataclasses.replace(cfg, deterministic=True)
        if args.verb == "run":
            record = run_single(cfg, args.out)
            print(json.dumps({"config_hash": record.config_hash, "fits": record.fits}, indent=2))
        elif args.verb == "sweep-mach":
            if args.eps_list:
                eps = tuple(float(v) for v in args.eps_list.split(","))
                cfg = dataclasses.replace(cfg, eps_list=eps)
            record = run_mach_sweep(cfg, args.out)
            print(json.dumps(record["table"], indent=2))
        elif args.verb == "converge":
            if args.refine_list:
                ref = tuple(int(v) for v in args.refine_list.split(","))
                cfg = dataclasses.replace(cfg, refine_list=ref)
            record = run_convergence(cfg, args.out)
            print(json.dumps(record["orders"], indent=2))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VortexLabError as exc:
        checkpoint = Path(args.out) / "checkpoint_failure"
        print(f"numerical failure: {exc}", file=sys.stderr)
        if checkpoint.exists():
            print(f"last good checkpoint: {checkpoint}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
