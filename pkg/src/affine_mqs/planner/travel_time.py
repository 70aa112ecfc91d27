"""Shortest maneuver duration whose forced tracking error stays within budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .trajectory import MotionPlan


class TravelTimeError(RuntimeError):
    pass


@dataclass
class TravelTimeResult:
    T: float
    tf: float
    max_deviation: float
    budget: float
    evaluations: list = field(default_factory=list)  # (T, max deviation) in call order


def solve_travel_time(
    plan_template: MotionPlan,
    topology,
    gains,
    delta: float,
    rho: float = 0.001,
    dt: float = 0.01,
    cap: float = 1e4,
    resolution: float = 1.0,
    T_start: float | None = None,
    E0="rest",
    H=None,
    r0=None,
) -> TravelTimeResult:
    """Smallest T = t_f - t_0 (on a ``resolution`` grid) with max deviation ≤ (1-ρ)δ.

    ``topology`` is a :class:`~affine_mqs.topology.CommTopology` built on
    the same formation; ``r0`` defaults to the formation positions stored
    in ``plan_template.meta["r0"]``. The search grows T geometrically until
    feasible, then bisects between the last infeasible and first feasible
    values.
    """
    from ..swarm_sim.error_dynamics import ErrorSystem, simulate_error_dynamics
    from ..topology import compute_H

    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if r0 is None:
        r0 = plan_template.meta.get("r0")
        if r0 is None:
            raise ValueError("initial formation positions are required")
    r0 = np.asarray(r0, dtype=float)
    H = compute_H(topology) if H is None else np.asarray(H, dtype=float)
    budget = (1.0 - rho) * delta
    t0 = plan_template.t0
    cache: dict[float, float] = {}
    evals: list = []

    def max_dev(T: float) -> float:
        if T not in cache:
            plan = plan_template.with_final_time(t0 + T)
            sys_ = ErrorSystem(topology.L, gains, H, topology.leader_ids, r0, plan)
            cache[T] = simulate_error_dynamics(sys_, dt=min(dt, T / 50), E0=E0).max_deviation
            evals.append((T, cache[T]))
        return cache[T]

    def snap(T: float) -> float:
        return resolution * math.ceil(T / resolution - 1e-12)

    top = resolution * math.floor(cap / resolution + 1e-12)  # largest admissible T
    if top <= 0.0:
        raise TravelTimeError(f"cap of {cap} s is below the time resolution {resolution} s")
    lo = 0.0  # known infeasible (or the zero horizon)
    hi = min(snap(T_start if T_start is not None else 4.0 * resolution), top)
    while max_dev(hi) > budget:
        if hi >= top:
            raise TravelTimeError(f"no feasible travel time up to the cap of {cap} s "
                                  f"(max deviation {max_dev(hi):.4g} > {budget:.4g})")
        lo = hi
        hi = min(snap(hi * 2.0), top)
    while hi - lo > resolution * (1 + 1e-9):
        mid = snap(0.5 * (lo + hi))
        if mid >= hi:
            mid = hi - resolution
        if mid <= lo:
            break
        if max_dev(mid) <= budget:
            hi = mid
        else:
            lo = mid
    return TravelTimeResult(hi, t0 + hi, max_dev(hi), budget, evals)
