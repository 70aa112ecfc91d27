"""End-to-end orchestration: certify, plan, size the horizon, fly, audit.

Stages run in a fixed order and each records its wall time and a small
JSON-friendly summary. A failing stage stops the run; ``emit_outputs``
still writes whatever the completed stages produced, plus a MANIFEST
naming the failed stage.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .planner.astar import plan_path
from .planner.safety import TargetConfiguration, safety_bounds, shear_angles, validate_plan
from .planner.trajectory import MotionPlan
from .planner.travel_time import solve_travel_time
from .scenario import Scenario
from .swarm_sim.audit import SafetyMonitor, audit_safety
from .swarm_sim.closed_loop import SimConfig, TrajectoryLog, simulate_nonlinear
from .swarm_sim.error_dynamics import error_eigenvalues
from .swarm_sim.gains import check_gain_stability
from .topology import Formation, build_topology, certify_stability, compute_H, topology_audit

STAGES = ("topology", "shear", "bounds", "path", "plan", "travel_time", "simulate", "audit")
LAST_STAGE = {"plan": "plan", "solve-time": "travel_time", "simulate": "simulate", "run": "audit"}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


@dataclass
class RunFlags:
    plan_only: bool = False
    tf: float | None = None  # fixed horizon, bypasses the travel-time search
    dt: float | None = None
    threads: int = 1
    stop_after: str = "audit"


@dataclass
class RunReport:
    scenario: str
    stages: dict = field(default_factory=dict)  # name -> {"wall_time", ...summary}
    completed: list = field(default_factory=list)
    failed_stage: str | None = None
    error: str | None = None
    tf_star: float | None = None
    audit: dict | None = None
    # heavy objects kept for emit_outputs, not serialized
    topology: object = field(default=None, repr=False)
    plan: MotionPlan | None = field(default=None, repr=False)
    log: TrajectoryLog | None = field(default=None, repr=False)

    @property
    def audit_pass(self) -> bool | None:
        return None if self.audit is None else bool(self.audit["pass"])

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "completed": list(self.completed),
            "failed_stage": self.failed_stage,
            "error": self.error,
            "tf_star": self.tf_star,
            "audit_pass": self.audit_pass,
            "stages": self.stages,
        }


def initial_theta(beta5: float, beta6: float) -> np.ndarray:
    return np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, beta5, beta6])


def final_theta(scn: Scenario, beta5: float, beta6: float) -> np.ndarray:
    if scn.theta_f is not None:
        return np.array(scn.theta_f, dtype=float)
    return np.concatenate([scn.lambda_f, scn.rotation_f, [0.0, beta5, beta6]])


def run_pipeline(scn: Scenario, flags: RunFlags | None = None) -> RunReport:
    flags = flags or RunFlags()
    stop = "plan" if flags.plan_only else flags.stop_after
    rep = RunReport(scenario=scn.name)
    ctx: dict = {}
    dt = flags.dt if flags.dt is not None else scn.solver["dt"]

    def stage(name, fn):
        t = time.perf_counter()
        try:
            summary = fn()
        except StageError:
            raise
        except Exception as exc:  # every failure is attributed to its stage
            raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
        finally:
            rep.stages.setdefault(name, {})["wall_time"] = time.perf_counter() - t
        rep.stages[name].update(summary or {})
        rep.completed.append(name)

    def do_topology():
        form = Formation.build(scn.positions, scn.leader_ids, scn.n, scn.boundary_ids, scn.interior_ids)
        top = build_topology(form)
        cert = certify_stability(top)
        if not cert.hurwitz:
            raise StageError("topology", f"-L is not Hurwitz (max Re eig(L) = {cert.max_real:.4g})")
        gr = check_gain_stability(scn.gains.position)
        if not gr.stable:
            raise StageError("topology", f"control gains {scn.gains.position} fail the Routh-Hurwitz test")
        eig = error_eigenvalues(top.L, scn.gains.position)
        if not np.max(eig.real) < 0:
            raise StageError("topology", f"error dynamics unstable (max Re = {np.max(eig.real):.4g})")
        ctx.update(form=form, top=top, H=compute_H(top))
        rep.topology = top
        return {"certificate": cert.to_dict(), "gains": gr.to_dict(),
                "error_dynamics_max_real": float(np.max(eig.real))}

    def do_shear():
        b5, b6, obj = shear_angles(scn.positions)
        ctx.update(b5=b5, b6=b6)
        return {"beta5": b5, "beta6": b6, "min_gap": obj}

    def do_bounds():
        sb = safety_bounds(scn.positions, scn.d0, scn.delta, scn.epsilon, scn.r_max, ctx["b5"], ctx["b6"])
        ctx["bounds"] = sb
        return sb.to_dict()

    def do_path():
        if scn.grid is None:
            wp = np.array([scn.d0, scn.d_f])
            ctx["waypoints"] = wp
            return {"waypoints": wp.tolist(), "grid": False}
        res = plan_path(scn.grid, scn.d0, scn.d_f, scn.r_max)
        ctx["waypoints"] = res.waypoints
        return {"waypoints": res.waypoints.tolist(), "grid": True, "length": res.length,
                "grid_cost": res.grid_cost}

    def do_plan():
        t0 = scn.solver["t0"]
        th0 = initial_theta(ctx["b5"], ctx["b6"])
        thf = final_theta(scn, ctx["b5"], ctx["b6"])
        # the shape of the maneuver does not depend on its duration
        plan = MotionPlan(ctx["waypoints"], t0, t0 + 1.0, th0, thf, ctx["bounds"], {"r0": scn.positions})
        target = TargetConfiguration(scn.Q_f, scn.d_f) if scn.Q_f is not None else \
            TargetConfiguration.from_theta(thf, scn.d_f)
        pr = validate_plan(plan, 1e-3, target=target)
        if not pr.ok:
            raise StageError("plan", f"plan violates its safety window: {pr.first_violation}")
        ctx["plan"] = plan
        rep.plan = plan
        return {"theta0": th0.tolist(), "thetaf": thf.tolist(), "validation": pr.to_dict()}

    def do_travel_time():
        fixed = flags.tf if flags.tf is not None else scn.solver["tf"]
        plan = ctx["plan"]
        if fixed is not None:
            T = float(fixed) - plan.t0
            if not T > 0:
                raise StageError("travel_time", f"fixed tf={fixed} must exceed t0={plan.t0}")
            out = {"fixed": True, "T": T}
        else:
            res = solve_travel_time(plan, ctx["top"], scn.gains.position, scn.delta, rho=scn.solver["rho"],
                                    dt=scn.solver["error_dt"], cap=scn.solver["tf_cap"],
                                    resolution=scn.solver["resolution"], H=ctx["H"], r0=scn.positions)
            T = res.T
            out = {"fixed": False, "T": T, "max_deviation": res.max_deviation, "budget": res.budget,
                   "evaluations": [list(e) for e in res.evaluations]}
        ctx["plan"] = plan.with_final_time(plan.t0 + T)
        rep.plan = ctx["plan"]
        rep.tf_star = ctx["plan"].tf
        out["tf"] = rep.tf_star
        return out

    def do_simulate():
        mon = SafetyMonitor(scn.delta, scn.epsilon, scn.r_max, scn.grid)
        cfg = SimConfig(dt=dt, log_dt=scn.solver["log_dt"], threads=flags.threads)
        log = simulate_nonlinear(ctx["plan"], ctx["top"], scn.positions, scn.params, scn.gains, cfg, mon)
        ctx["monitor"] = mon
        rep.log = log
        return {"steps": log.steps, "dt": dt, "threads": flags.threads, "aborted": log.aborted,
                "max_deviation_logged": log.max_deviation if len(log.t) else None}

    def do_audit():
        rep.audit = audit_safety(rep.log, ctx["monitor"])
        return {"pass": rep.audit["pass"]}

    fns = dict(topology=do_topology, shear=do_shear, bounds=do_bounds, path=do_path, plan=do_plan,
               travel_time=do_travel_time, simulate=do_simulate, audit=do_audit)
    try:
        for name in STAGES:
            stage(name, fns[name])
            if name == stop:
                break
    except StageError as exc:
        rep.failed_stage, rep.error = exc.stage, str(exc)
    return rep


# --- outputs -----------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _series_csv(path: Path, t, values, prefix: str = "agent_") -> None:
    values = np.asarray(values)
    with open(path, "w", newline="") as f:
        f.write("t," + ",".join(f"{prefix}{i}" for i in range(values.shape[1])) + "\n")
        for k in range(len(t)):
            f.write(_fmt(t[k]) + "," + ",".join(_fmt(v) for v in values[k]) + "\n")


def write_trajectory_csv(path: Path, log: TrajectoryLog) -> None:
    dev = log.deviation
    with open(path, "w", newline="") as f:
        f.write("t,agent_id,x,y,z,dev,p,phi,theta,psi\n")
        for k in range(len(log.t)):
            tk = _fmt(log.t[k])
            for i in range(log.positions.shape[1]):
                x, y, z = log.positions[k, i]
                ph, th, ps = log.euler[k, i]
                f.write(",".join([tk, str(i), _fmt(x), _fmt(y), _fmt(z), _fmt(dev[k, i]),
                                  _fmt(log.thrust[k, i]), _fmt(ph), _fmt(th), _fmt(ps)]) + "\n")


def read_trajectory_csv(path) -> dict:
    """Inverse of ``write_trajectory_csv``: arrays indexed (sample, agent)."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = np.unique(raw[:, 0])
    N = int(raw[:, 1].max()) + 1
    cols = raw.reshape(len(t), N, -1)
    return {"t": t, "positions": cols[:, :, 2:5], "dev": cols[:, :, 5], "thrust": cols[:, :, 6],
            "euler": cols[:, :, 7:10]}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def emit_outputs(report: RunReport, outdir) -> list[str]:
    """Write every artifact the run produced; returns the file names."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    def add(name):
        files.append(name)
        return out / name

    if report.topology is not None:
        _dump(add("topology.json"), topology_audit(report.topology))
    if report.plan is not None:
        p = report.plan
        _dump(add("plan.json"), {
            "waypoints": p.waypoints, "t0": p.t0, "tf": p.tf, "theta0": p.theta0, "thetaf": p.thetaf,
            "knot_times": p.knot_times, "tf_star": report.tf_star,
            "bounds": p.bounds.to_dict() if p.bounds is not None else None,
        })
    log = report.log
    if log is not None and len(log.t):
        write_trajectory_csv(add("trajectory.csv"), log)
        _series_csv(add("deviation.csv"), log.t, log.deviation)
        _series_csv(add("thrust.csv"), log.t, log.thrust)
        _series_csv(add("roll.csv"), log.t, log.euler[:, :, 0])
        _series_csv(add("pitch.csv"), log.t, log.euler[:, :, 1])
        for a, axis in enumerate("xyz"):
            _series_csv(add(f"pos_{axis}.csv"), log.t, log.positions[:, :, a])
    if report.audit is not None:
        _dump(add("audit.json"), report.audit)
    _dump(add("report.json"), report.to_dict())
    add("summary.txt").write_text(summary_text(report))
    _dump(out / "MANIFEST.json", {
        "status": "failed" if report.failed_stage else "complete",
        "failed_stage": report.failed_stage,
        "error": report.error,
        "completed_stages": report.completed,
        "files": files,
    })
    return files + ["MANIFEST.json"]


def summary_text(report: RunReport) -> str:
    lines = [f"scenario: {report.scenario}"]
    for name in report.completed:
        lines.append(f"  {name:<12} ok    {report.stages[name]['wall_time']:8.3f} s")
    if report.failed_stage:
        lines.append(f"  {report.failed_stage:<12} FAIL  {report.stages.get(report.failed_stage, {}).get('wall_time', 0):8.3f} s")
        lines.append(f"error: {report.error}")
    st = report.stages
    if "certificate" in st.get("topology", {}):
        c = st["topology"]["certificate"]
        lines.append(f"topology: rho(G) = {c['rho_G']:.6g}, max Re eig(L) = {c['max_real_eig_L']:.6g}")
    if "lambda_min" in st.get("bounds", {}):
        b = st["bounds"]
        lines.append(f"eigenvalue window: [{b['lambda_min']:.6g}, {b['lambda_max']:.6g}] "
                     f"(d_min={b['d_min']:.6g}, d_max={b['d_max']:.6g})")
    if report.tf_star is not None:
        lines.append(f"travel time T = {report.tf_star - report.plan.t0:g} s (tf = {report.tf_star:g})")
    if report.audit is not None:
        lines.append(f"audit: {'PASS' if report.audit['pass'] else 'FAIL'} over {report.audit['samples']} samples")
        for name, c in report.audit["checks"].items():
            if c["checked"]:
                w = "n/a" if c["worst"] is None else f"{c['worst']:.6g}"
                lines.append(f"  {name:<12} {'pass' if c['pass'] else 'FAIL'}  worst {w}  bound {c['bound']:.6g}")
        if report.audit.get("aborted"):
            lines.append(f"  simulation aborted: {report.audit['aborted']}")
    return "\n".join(lines) + "\n"
