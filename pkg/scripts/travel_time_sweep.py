"""Max deviation of the linear error dynamics against travel time.

Prints the curve around the solved T* for a scenario and, with --poles,
repeats the travel-time search for several binomial gain poles.

    python3 scripts/travel_time_sweep.py scenarios/nine_agent.json --poles 1.5 2 3
"""

import argparse

import numpy as np

from affine_mqs.pipeline import RunFlags, run_pipeline
from affine_mqs.planner import solve_travel_time
from affine_mqs.scenario import load_scenario
from affine_mqs.swarm_sim import ErrorSystem, check_gain_stability, simulate_error_dynamics
from affine_mqs.topology import Formation, build_topology, compute_H
from affine_mqs.vehicle import Gains


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario")
    ap.add_argument("--span", type=float, default=0.5, help="sweep T from (1-span)T* to (1+span)T*")
    ap.add_argument("--points", type=int, default=11)
    ap.add_argument("--poles", type=float, nargs="*", default=[])
    args = ap.parse_args()

    scn = load_scenario(args.scenario)
    rep = run_pipeline(scn, RunFlags(stop_after="travel_time"))
    if rep.failed_stage:
        raise SystemExit(rep.error)
    plan = rep.plan
    T_star = plan.tf - plan.t0
    top = build_topology(Formation.build(scn.positions, scn.leader_ids))
    H = compute_H(top)
    print(f"{scn.name}: T* = {T_star:g} s, budget {(1 - scn.solver['rho']) * scn.delta:.5g} m")
    print(f"{'T [s]':>8} {'max dev [m]':>12}")
    for T in np.linspace((1 - args.span) * T_star, (1 + args.span) * T_star, args.points):
        sys_ = ErrorSystem(top.L, scn.gains.position, H, top.leader_ids, scn.positions, plan.with_final_time(plan.t0 + T))
        dev = simulate_error_dynamics(sys_, dt=min(scn.solver["error_dt"], T / 50)).max_deviation
        print(f"{T:8.2f} {dev:12.6f}{'  *' if dev > scn.delta else ''}")

    for a in args.poles:
        k = Gains.from_pole(a).position
        if not check_gain_stability(k).stable:
            print(f"pole {a:g}: unstable gains")
            continue
        res = solve_travel_time(plan, top, k, scn.delta, rho=scn.solver["rho"], dt=scn.solver["error_dt"],
                                cap=scn.solver["tf_cap"], H=H, r0=scn.positions)
        print(f"pole {a:g}: T* = {res.T:g} s (max dev {res.max_deviation:.5f}, {len(res.evaluations)} evaluations)")


if __name__ == "__main__":
    main()
