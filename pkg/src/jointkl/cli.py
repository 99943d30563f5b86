"""``jointkl run | report | repro``.

Exit codes: 0 success, 1 failed cells or checks, 2 usage or config errors.
"""

from __future__ import annotations

import argparse
import sys

from jointkl.harness.config import ConfigError, check_compatible, load_config
from jointkl.harness.report import ReportError, make_report
from jointkl.harness.repro import REPRO_IDS, repro
from jointkl.harness.runner import default_out, read_results, run_experiment


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointkl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    report = sub.add_parser("report", help="normalized summary of a results CSV")
    report.add_argument("csv")
    report.add_argument("--baseline", default="mlp")
    rep = sub.add_parser("repro", help="desk-scale reproduction with PASS/FAIL checks")
    rep.add_argument("figure", choices=REPRO_IDS)

    for p in (run, rep):
        p.add_argument("--seed", type=int, default=None, help="base seed mixed into every stream key")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--m-enn", type=int, default=None, help="override the ENN sample count")
    run.add_argument("--out", default=None, help="results CSV (default: [experiment] out or NAME.csv)")
    report.add_argument("--out", default=None, help="write the plot-ready CSV here")
    rep.add_argument("--out", default=".", help="directory for the results CSV")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2

    if args.command == "run":
        try:
            cfg = load_config(args.config).with_overrides(m_enn=args.m_enn, base_seed=args.seed)
            check_compatible(cfg)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        out = args.out or default_out(cfg)
        try:
            rows, failures = run_experiment(cfg, jobs=args.jobs, out=out)
        except FileExistsError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"{len(rows)} rows in {out}; {failures} failed cells")
        return 1 if failures else 0

    if args.command == "report":
        try:
            _, rows = read_results(args.csv)
            report = make_report(rows, baseline=args.baseline)
        except (OSError, ValueError) as exc:
            kind = "report error" if isinstance(exc, ReportError) else "error"
            print(f"{kind}: {exc}", file=sys.stderr)
            return 2
        print(report.table())
        if args.out:
            report.write_csv(args.out)
        return 0

    try:
        checks = repro(args.figure, out_dir=args.out, jobs=args.jobs, m_enn=args.m_enn, base_seed=args.seed)
    except (ConfigError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
