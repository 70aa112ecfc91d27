"""Command line entry point.

Exit codes: 0 success (and audit pass when audited), 2 scenario error,
3 stage failure, 4 audit failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .pipeline import LAST_STAGE, RunFlags, emit_outputs, read_trajectory_csv, run_pipeline, summary_text
from .planner.trajectory import MotionPlan
from .scenario import ScenarioError, load_scenario
from .swarm_sim.audit import SafetyMonitor, dumps_report

OUT_ENV = "AFFINE_MQS_OUT"
EXIT_OK, EXIT_SCENARIO, EXIT_STAGE, EXIT_AUDIT = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="affine-mqs", description="Affine formation maneuvers for quadcopter swarms.")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, type=Path, help="scenario JSON file")
    common.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./out)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    run_opts = argparse.ArgumentParser(add_help=False)
    run_opts.add_argument("--dt", type=float, default=None, help="integrator step of the nonlinear simulation [s]")
    run_opts.add_argument("--tf", type=float, default=None, help="fixed final time; skips the travel-time search")
    run_opts.add_argument("--threads", type=int, default=1, help="worker threads for per-agent dynamics")
    sub.add_parser("plan", parents=[common], help="certify topology and validate the motion plan")
    sub.add_parser("solve-time", parents=[common, run_opts], help="plan and find the minimal travel time")
    sub.add_parser("simulate", parents=[common, run_opts], help="plan, size and fly the maneuver (no audit verdict)")
    sub.add_parser("audit", parents=[common], help="re-audit trajectory.csv in the output directory")
    p = sub.add_parser("run", parents=[common, run_opts], help="full pipeline with safety audit")
    p.add_argument("--plan-only", action="store_true", help="stop after plan validation")
    return ap


def _outdir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUT_ENV, "out"))


def _audit_existing(scn, outdir: Path) -> dict:
    """Audit a previously written trajectory against the stored plan."""
    plan_d = json.loads((outdir / "plan.json").read_text())
    plan = MotionPlan(np.array(plan_d["waypoints"]), plan_d["t0"], plan_d["tf"],
                      np.array(plan_d["theta0"]), np.array(plan_d["thetaf"]))
    traj = read_trajectory_csv(outdir / "trajectory.csv")
    t = traj["t"]
    desired = plan.desired_positions(t, scn.positions, order=0)[0]
    centers = plan.displacement(t, order=0)[0]
    mon = SafetyMonitor(scn.delta, scn.epsilon, scn.r_max, scn.grid)
    mon.observe(t, traj["positions"], desired, centers)
    return mon.report()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SCENARIO
    outdir = _outdir(args)

    if args.command == "audit":
        try:
            rep = _audit_existing(scn, outdir)
        except (OSError, ValueError, KeyError) as exc:
            print(f"audit: cannot read previous run in {outdir}: {exc}", file=sys.stderr)
            return EXIT_STAGE
        (outdir / "audit.json").write_text(dumps_report(rep) + "\n")
        if not args.quiet:
            print(f"audit: {'PASS' if rep['pass'] else 'FAIL'} over {rep['samples']} logged samples")
        return EXIT_OK if rep["pass"] else EXIT_AUDIT

    if getattr(args, "threads", 1) < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_SCENARIO
    flags = RunFlags(
        plan_only=getattr(args, "plan_only", False),
        tf=getattr(args, "tf", None),
        dt=getattr(args, "dt", None),
        threads=getattr(args, "threads", 1),
        stop_after=LAST_STAGE[args.command],
    )
    report = run_pipeline(scn, flags)
    try:
        emit_outputs(report, outdir)
    except OSError as exc:
        print(f"cannot write outputs to {outdir}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    if not args.quiet:
        print(summary_text(report), end="")
    if report.failed_stage:
        print(report.error, file=sys.stderr)
        return EXIT_STAGE
    if report.audit is not None and not report.audit["pass"]:
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
