"""Scenario files: JSON description of one maneuver problem.

Layout (optional keys in brackets)::

    {
      "name": "...",
      "formation": {"positions": [[x, y, z], ...], "leader_ids": [...],
                    ["n": 2], ["boundary_ids": [...]], ["interior_ids": [...]]},
      ["d0": [x, y, z]],                       # default: formation centroid
      ["grid": {"file": "grid.txt"} | {"origin", "cell_size", "dims", "boxes"}],
      "target": {"d_f": [x, y, z],
                 "lambda_f": [l1, l2, l3] | "theta_f": [9 values],
                 ["rotation_f": [b1, b2, b3]], ["Q_f": 3x3]},
      "safety": {"delta", "epsilon", "r_max"},
      "vehicle": {"mass", "inertia": [Jxx, Jyy, Jzz] | 3x3,
                  "gains": [k1, k2, k3, k4] | {"pole": a}, ["yaw_gains": [k1, k2]],
                  ["saturation": {"u_p", "torque"}], ["gyro_sign": -1]},
      ["solver": {"dt", "error_dt", "tf_cap", "rho", "resolution", "t0", "tf",
                  "log_dt", "plan_sample_dt"}]
    }

With ``lambda_f`` the eigenvector angles (β4, β5, β6) are (0, β5*, β6*)
from the shear-angle search; ``theta_f`` fixes all nine features.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affine_core import (
    DegenerateSimplexError,
    HyperplaneError,
    build_jacobian,
    leader_coefficients,
    point_dimension,
    rank_fn,
)
from .planner.grid import GridError, OccupancyGrid
from .vehicle import Gains, QuadParams


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


SOLVER_DEFAULTS = {
    "dt": 1e-3,
    "error_dt": 0.01,
    "tf_cap": 1e4,
    "rho": 0.001,
    "resolution": 1.0,
    "t0": 0.0,
    "tf": None,
    "log_dt": 0.1,
    "plan_sample_dt": 0.01,
}


@dataclass
class Scenario:
    name: str
    positions: np.ndarray
    leader_ids: tuple
    n: int
    d0: np.ndarray
    d_f: np.ndarray
    delta: float
    epsilon: float
    r_max: float
    params: QuadParams
    gains: Gains
    lambda_f: np.ndarray | None = None
    rotation_f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_f: np.ndarray | None = None
    Q_f: np.ndarray | None = None
    boundary_ids: tuple | None = None
    interior_ids: tuple | None = None
    grid: OccupancyGrid | None = None
    grid_spec: dict | None = None
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    raw: dict = field(default_factory=dict, repr=False)
    source: Path | None = None

    @property
    def N(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        P = self.params
        J = P.inertia
        veh = {
            "mass": P.mass,
            "inertia": np.diag(J).tolist() if np.allclose(J, np.diag(np.diag(J))) else J.tolist(),
            "gains": [self.gains.k1, self.gains.k2, self.gains.k3, self.gains.k4],
            "yaw_gains": [self.gains.k_psi1, self.gains.k_psi2],
            "gyro_sign": P.gyro_sign,
        }
        if P.u_p_limit is not None or P.torque_limit is not None:
            veh["saturation"] = {"u_p": P.u_p_limit, "torque": P.torque_limit}
        target = {"d_f": self.d_f.tolist()}
        if self.theta_f is not None:
            target["theta_f"] = self.theta_f.tolist()
        else:
            target["lambda_f"] = self.lambda_f.tolist()
            target["rotation_f"] = self.rotation_f.tolist()
        if self.Q_f is not None:
            target["Q_f"] = np.asarray(self.Q_f).tolist()
        form = {"positions": self.positions.tolist(), "leader_ids": list(self.leader_ids), "n": self.n}
        if self.boundary_ids is not None:
            form["boundary_ids"] = list(self.boundary_ids)
            form["interior_ids"] = list(self.interior_ids)
        out = {
            "name": self.name,
            "formation": form,
            "d0": self.d0.tolist(),
            "target": target,
            "safety": {"delta": self.delta, "epsilon": self.epsilon, "r_max": self.r_max},
            "vehicle": veh,
            "solver": dict(self.solver),
        }
        if self.grid_spec is not None:
            out["grid"] = copy.deepcopy(self.grid_spec)
            f = out["grid"].get("file")
            if f is not None and self.source is not None and not Path(f).is_absolute():
                # keep the grid reachable wherever the dump is written
                out["grid"]["file"] = str((Path(self.source).parent / f).resolve())
        return out


def _num(d: dict, key: str, path: str, errors: list, positive: bool = False, default=None):
    if key not in d:
        if default is not None:
            return default
        errors.append(f"{path}.{key}: missing")
        return None
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        errors.append(f"{path}.{key}: expected a finite number, got {v!r}")
        return None
    if positive and not v > 0:
        errors.append(f"{path}.{key}: must be positive, got {v}")
        return None
    return float(v)


def _vec(v, path: str, errors: list, length: int | None = None):
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{path}: expected numbers, got {v!r}")
        return None
    if length is not None and a.shape != (length,):
        errors.append(f"{path}: expected {length} numbers, got shape {a.shape}")
        return None
    if not np.all(np.isfinite(a)):
        errors.append(f"{path}: values must be finite")
        return None
    return a


def _load_grid(spec, base: Path | None, errors: list):
    if spec is None:
        return None
    try:
        if "file" in spec:
            p = Path(spec["file"])
            if not p.is_absolute() and base is not None:
                p = base / p
            return OccupancyGrid.load(p)
        return OccupancyGrid.from_boxes(spec["origin"], spec["cell_size"], spec["dims"], spec.get("boxes", []))
    except (OSError, GridError, KeyError, TypeError, ValueError) as exc:
        errors.append(f"grid: {exc}")
        return None


def parse_scenario(data: dict, base: Path | None = None, source: Path | None = None) -> Scenario:
    """Validate a scenario dictionary; every problem is reported at once."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ScenarioError(["top level: expected a JSON object"])
    for sec in ("formation", "target", "safety", "vehicle"):
        if not isinstance(data.get(sec), dict):
            errors.append(f"{sec}: missing section")
    if errors:
        raise ScenarioError(errors)
    form, tgt, saf, veh = data["formation"], data["target"], data["safety"], data["vehicle"]

    P = None
    try:
        P = np.asarray(form.get("positions"), dtype=float)
        if P.ndim != 2 or P.shape[1] != 3 or len(P) < 2:
            errors.append(f"formation.positions: expected a list of at least two [x, y, z], got shape {P.shape}")
            P = None
        elif not np.all(np.isfinite(P)):
            errors.append("formation.positions: values must be finite")
            P = None
    except (TypeError, ValueError):
        errors.append("formation.positions: expected a list of [x, y, z]")

    n = form.get("n")
    if n is None and P is not None:
        n = max(point_dimension(P), 1)
    if n is not None and n not in (1, 2, 3):
        errors.append(f"formation.n: must be 1, 2 or 3, got {n}")
        n = None

    leaders = form.get("leader_ids")
    if not isinstance(leaders, list) or not all(isinstance(i, int) for i in leaders):
        errors.append("formation.leader_ids: expected a list of agent indices")
        leaders = None
    elif P is not None:
        if len(set(leaders)) != len(leaders):
            errors.append("formation.leader_ids: duplicate ids")
        bad = [i for i in leaders if not 0 <= i < len(P)]
        if bad:
            errors.append(f"formation.leader_ids: ids {bad} out of range 0..{len(P) - 1}")
            leaders = None
        elif n is not None and len(leaders) != n + 1:
            errors.append(f"formation.leader_ids: need n+1 = {n + 1} leaders, got {len(leaders)}")
            leaders = None
    if P is not None and leaders is not None and n is not None:
        if rank_fn(P[leaders], n) != n:
            errors.append(f"formation.leader_ids: leaders violate the rank condition "
                          f"(rank of leader edge vectors must equal n = {n})")
        else:
            try:
                leader_coefficients(P, P[leaders], n)
            except HyperplaneError as exc:
                errors.append(f"formation.positions: {exc}")
            except DegenerateSimplexError as exc:
                errors.append(f"formation.leader_ids: {exc}")
    b_ids, i_ids = form.get("boundary_ids"), form.get("interior_ids")
    if (b_ids is None) != (i_ids is None):
        errors.append("formation: boundary_ids and interior_ids must be given together")

    d0 = _vec(data["d0"], "d0", errors, 3) if "d0" in data else (P.mean(axis=0) if P is not None else None)
    d_f = _vec(tgt.get("d_f"), "target.d_f", errors, 3) if "d_f" in tgt else None
    if d_f is None and "d_f" not in tgt:
        errors.append("target.d_f: missing")

    lam_f = theta_f = Q_f = None
    rot_f = np.zeros(3)
    if "theta_f" in tgt:
        theta_f = _vec(tgt["theta_f"], "target.theta_f", errors, 9)
    elif "lambda_f" in tgt:
        lam_f = _vec(tgt["lambda_f"], "target.lambda_f", errors, 3)
        if "rotation_f" in tgt:
            rot_f = _vec(tgt["rotation_f"], "target.rotation_f", errors, 3)
    else:
        errors.append("target: one of theta_f or lambda_f is required")
    if "Q_f" in tgt:
        Q_f = _vec(tgt["Q_f"], "target.Q_f", errors)
        if Q_f is not None and Q_f.shape != (3, 3):
            errors.append(f"target.Q_f: expected a 3x3 matrix, got shape {Q_f.shape}")
            Q_f = None
        if Q_f is not None:
            if theta_f is None:
                errors.append("target.Q_f: consistency needs target.theta_f (all nine features)")
            else:
                err = float(np.max(np.abs(build_jacobian(theta_f) - Q_f)))
                if err > 1e-9:
                    errors.append(f"target.Q_f: inconsistent with theta_f (max difference {err:.3e} > 1e-9)")

    delta = _num(saf, "delta", "safety", errors, positive=True)
    eps = _num(saf, "epsilon", "safety", errors, positive=True)
    r_max = _num(saf, "r_max", "safety", errors, positive=True)
    if None not in (delta, eps, r_max) and not r_max > delta + eps:
        errors.append(f"safety.r_max: must exceed delta + epsilon = {delta + eps}")

    params = gains = None
    mass = _num(veh, "mass", "vehicle", errors, positive=True)
    J = veh.get("inertia", [0.01, 0.01, 0.02])
    sat = veh.get("saturation") or {}
    try:
        if mass is not None:
            params = QuadParams(
                mass=mass, inertia=np.asarray(J, dtype=float),
                gyro_sign=float(veh.get("gyro_sign", -1.0)),
                u_p_limit=sat.get("u_p"), torque_limit=sat.get("torque"),
            )
    except (TypeError, ValueError) as exc:
        errors.append(f"vehicle.inertia: {exc}")
    g = veh.get("gains")
    yaw = veh.get("yaw_gains")
    try:
        if isinstance(g, dict) and "pole" in g:
            a = float(g["pole"])
            gains = Gains.from_pole(a, *(yaw if yaw else (None, None)))
        else:
            k = _vec(g, "vehicle.gains", errors, 4)
            if k is not None:
                ky = yaw if yaw else (4.0, 4.0)
                gains = Gains(*map(float, k), float(ky[0]), float(ky[1]))
    except (TypeError, ValueError) as exc:
        errors.append(f"vehicle.gains: {exc}")

    solver = dict(SOLVER_DEFAULTS)
    for k, v in (data.get("solver") or {}).items():
        if k not in SOLVER_DEFAULTS:
            errors.append(f"solver.{k}: unknown setting")
            continue
        if v is None and k == "tf":
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            errors.append(f"solver.{k}: expected a number, got {v!r}")
            continue
        solver[k] = float(v)
    if not 0 < solver["rho"] < 1:
        errors.append(f"solver.rho: must be in (0, 1), got {solver['rho']}")
    for k in ("dt", "error_dt", "log_dt", "plan_sample_dt", "resolution", "tf_cap"):
        if not solver[k] > 0:
            errors.append(f"solver.{k}: must be positive")
    if solver["tf"] is not None and not solver["tf"] > solver["t0"]:
        errors.append("solver.tf: must exceed solver.t0")

    grid_spec = data.get("grid")
    grid = _load_grid(grid_spec, base, errors)
    if grid is not None:
        for name, pt in (("d0", d0), ("target.d_f", d_f)):
            if pt is not None and not grid.contains(pt):
                errors.append(f"{name}: outside the obstacle grid")

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        name=str(data.get("name", "scenario")),
        positions=P, leader_ids=tuple(leaders), n=int(n), d0=np.asarray(d0, float), d_f=d_f,
        delta=delta, epsilon=eps, r_max=r_max, params=params, gains=gains,
        lambda_f=lam_f, rotation_f=rot_f, theta_f=theta_f, Q_f=Q_f,
        boundary_ids=None if b_ids is None else tuple(b_ids),
        interior_ids=None if i_ids is None else tuple(i_ids),
        grid=grid, grid_spec=copy.deepcopy(grid_spec), solver=solver, raw=data, source=source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc.strerror or exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return parse_scenario(data, base=path.parent, source=path)


def dumps_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2)


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(scenario) + "\n")
