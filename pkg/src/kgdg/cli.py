"""Command-line entry point.

Subcommands:
    run       evolve a single manifest (JSON file) and store its snapshots
    sweep     stability threshold tables over an (A, m) matrix
    refine    nested-grid convergence tables
    diagnose  recompute diagnostics from already-stored snapshots
    export    dump a snapshot file as plot-ready CSV

Exit codes: 0 success, 2 plan/manifest validation error, 3 solver failure in
`run` mode.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    PlanError,
    parse_plan,
    run_refinement_suite,
    run_single,
    run_stability_sweep,
)
from .store import RunManifest, StoreError, export_csv, read_series


def _add_plan_arg(sub):
    sub.add_argument("plan", help="plan file (key = value lines)")
    sub.add_argument("-o", "--output-dir", help="override the plan's output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgdg",
        description="Energy-conserving Klein-Gordon runs with stability and "
        "convergence verdict tables",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single manifest")
    p_run.add_argument("manifest", help="manifest JSON file")
    p_run.add_argument("-t", "--t-end", type=float, required=True)
    p_run.add_argument("-o", "--output-dir", default="runs")
    p_run.add_argument("--no-reuse", action="store_true",
                       help="recompute even if a snapshot file already exists")

    p_sweep = sub.add_parser("sweep", help="stability threshold tables")
    _add_plan_arg(p_sweep)

    p_refine = sub.add_parser("refine", help="convergence verdict tables")
    _add_plan_arg(p_refine)

    p_diag = sub.add_parser("diagnose", help="recompute tables from stored snapshots")
    _add_plan_arg(p_diag)
    p_diag.add_argument("--kind", choices=["sweep", "refine", "both"], default="both")

    p_exp = sub.add_parser("export", help="snapshot file to CSV")
    p_exp.add_argument("snapshot", help=".snap file written by run/sweep/refine")
    p_exp.add_argument("-o", "--output", required=True, help="CSV destination")
    return parser


def _plan_from_args(args):
    overrides = {}
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    return parse_plan(args.plan, **overrides)


def _print_tables(kind, tables, plan):
    for a, cells in tables.items():
        eps_values = plan.eps_s if kind == "sweep" else plan.eps_c
        label = "eps_s" if kind == "sweep" else "eps_c"
        print(f"# {kind} table, A={a:g}")
        print(label + "\t" + "\t".join(f"m={m:g}" for m in plan.masses))
        for eps in eps_values:
            print(f"{eps:g}\t" + "\t".join(cells[(eps, m)] for m in plan.masses))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            try:
                with open(args.manifest, "r", encoding="utf-8") as fh:
                    manifest = RunManifest.from_dict(json.load(fh))
            except (OSError, ValueError, KeyError, TypeError) as exc:
                raise PlanError(f"bad manifest {args.manifest}: {exc}") from exc
            series = run_single(
                manifest, args.t_end, args.output_dir, reuse=not args.no_reuse
            )
            if not series.status.completed:
                print(
                    f"run failed at t={series.status.fail_time:g}: "
                    f"{series.status.fail_reason}",
                    file=sys.stderr,
                )
                return 3
            print(f"completed: {len(series.frames)} frames -> "
                  f"{args.output_dir}/{manifest.digest()}.snap")
        elif args.command == "sweep":
            plan = _plan_from_args(args)
            _print_tables("sweep", run_stability_sweep(plan), plan)
        elif args.command == "refine":
            plan = _plan_from_args(args)
            _print_tables("refine", run_refinement_suite(plan), plan)
        elif args.command == "diagnose":
            plan = _plan_from_args(args)
            if args.kind in ("sweep", "both"):
                _print_tables("sweep", run_stability_sweep(plan, require_existing=True), plan)
            if args.kind in ("refine", "both"):
                _print_tables("refine", run_refinement_suite(plan, require_existing=True), plan)
        elif args.command == "export":
            try:
                series = read_series(args.snapshot)
            except (OSError, StoreError) as exc:
                print(f"cannot read {args.snapshot}: {exc}", file=sys.stderr)
                return 2
            export_csv(series, args.output)
            print(f"wrote {args.output}")
    except PlanError as exc:
        print(f"plan error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
