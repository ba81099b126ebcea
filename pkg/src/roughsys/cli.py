"""Command-line entry point.

Exit codes: 0 on success, 2 when a run raises a verification alarm, 1 on error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import RoughSysError

SUBCOMMANDS = {
    "solve": "dirichlet-l2",
    "diagnose": "diagnose",
    "scan-carleson": "carleson-scan",
    "sweep-lp": "lp-sweep",
    "good-lambda": "good-lambda",
    "equivalence": "equivalence",
}

log = logging.getLogger("roughsys")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughsys", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    for name, scenario in SUBCOMMANDS.items():
        s = sub.add_parser(name, help=f"run the {scenario} scenario")
        s.add_argument("config", help="YAML scenario file")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--format", choices=("csv", "json"), default="json")
        s.add_argument("--threads", type=int, default=None, help="worker threads for BLAS")
        s.add_argument("--seed", type=int, default=None, help="override the configured seed")
        s.add_argument("--timing", action="store_true", help="include run time in the output")
    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    v.add_argument("--threads", type=int, default=None)
    return p


def _set_threads(n):
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _run_scenario(args, scenario) -> int:
    from .scenarios import emit, run

    cfg = load_config(args.config)
    if cfg.scenario != scenario:
        log.info("config names scenario %s; running %s", cfg.scenario, scenario)
        cfg.scenario = scenario
    if args.seed is not None:
        cfg.seed = args.seed
    report = run(cfg)
    if args.threads:
        report.provenance["threads"] = args.threads
    for path in emit(report, args.format, args.out, timing=args.timing):
        print(path)
    for k, v in report.metrics.items():
        print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")
    for alarm in report.alarms:
        print(f"ALARM: {alarm}", file=sys.stderr)
    return 2 if report.alarms else 0


def _verify(args) -> int:
    from .acceptance import run_all

    results = run_all(args.only)
    for r in results:
        print(r.line(), flush=True)
    return 0 if all(r.ok for r in results) else 2


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(getattr(args, "threads", None))
    try:
        if args.command == "verify":
            return _verify(args)
        return _run_scenario(args, SUBCOMMANDS[args.command])
    except RoughSysError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
