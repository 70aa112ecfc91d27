"""Numbered acceptance criteria; the terminal summary lists one verdict per criterion."""

import filecmp
import time
from pathlib import Path

import numpy as np
import pytest

from affine_mqs.affine_core import containment_fn, deformation_matrix, leader_coefficients
from affine_mqs.cli import main
from affine_mqs.integrators import rk4_integrate
from affine_mqs.pipeline import RunFlags, run_pipeline
from affine_mqs.planner.astar import NoPathError, grid_astar
from affine_mqs.planner.safety import lambda_min_bound, r_max_for
from affine_mqs.scenario import load_scenario
from affine_mqs.swarm_sim import SafetyMonitor, SimConfig, check_gain_stability, routh_hurwitz, simulate_nonlinear
from affine_mqs.swarm_sim.gains import quartic_roots
from affine_mqs.topology import Formation, build_topology, certify_stability, compute_H
from affine_mqs.vehicle import OuterCommand, QuadParams, QuadState, extended_derivative, feedback_linearize
from conftest import random_planar_formation
from oracles import dijkstra_cost

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def test_1_safety_bound_formulas(record):
    lmin = lambda_min_bound(0.115, 0.1, 0.4387)
    rmax = r_max_for(1.1243, 0.115, 0.1, 38.0555)
    ok = abs(lmin - 0.98017) <= 1e-4 and abs(rmax - 43.0) <= 0.1
    assert record(1, ok, f"lambda_min={lmin:.6f} (0.98017±1e-4), r_max={rmax:.4f} (43.0±0.1)")


def test_2_equal_eigenvalues_give_scaled_identity(record):
    rng = np.random.default_rng(2)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        lam = rng.uniform(-3, 3)
        b = rng.uniform(-np.pi, np.pi, 3)
        U = deformation_matrix([lam, lam, lam, 0, 0, 0, *b])
        worst = max(worst, np.max(np.abs(U - lam * np.eye(3))))
    el = time.perf_counter() - t
    assert record(2, worst < 1e-12 and el < 1.0, f"max |U_D - lambda I| = {worst:.2e}, {el:.2f} s")


@pytest.fixture(scope="module")
def formations():
    rng = np.random.default_rng(3)
    out = []
    for _ in range(100):
        P = random_planar_formation(rng, int(rng.integers(1, 28)))
        F = Formation.build(P, [0, 1, 2])
        out.append((P, F, build_topology(F)))
    return out


def test_3_leader_coefficients_from_laplacian(record, formations):
    t = time.perf_counter()
    worst = 0.0
    for P, F, top in formations:
        H = compute_H(top)
        Ha = leader_coefficients(P, P[[0, 1, 2]], 2)
        worst = max(worst, np.max(np.abs(H - Ha)))
    el = time.perf_counter() - t
    assert record(3, worst < 1e-8 and el < 10, f"max |-L^-1 L0 - H_alpha| = {worst:.2e} over 100 formations")


def test_4_topology_stability(record, formations):
    checked, bad = 0, 0
    for P, F, top in formations:
        rep = certify_stability(top)
        if rep.negative_weight_followers:
            continue
        checked += 1
        bad += not (rep.rho_G < 1 and rep.max_real < 0)
    assert record(4, checked > 0 and bad == 0, f"{checked} formations with interior followers, {bad} unstable")


def test_5_containment_matches_barycentric(record):
    rng = np.random.default_rng(5)
    t = time.perf_counter()
    tested = disagree = 0
    while tested < 10_000:
        n = int(rng.integers(1, 4))
        V = np.zeros((n + 1, 3))
        V[:, :n] = rng.uniform(-5, 5, (n + 1, n))
        c = np.zeros(3)
        c[:n] = rng.uniform(-6, 6, n)
        A = np.vstack([V[:, :n].T, np.ones(n + 1)])
        if abs(np.linalg.det(A)) < 1e-2:
            continue
        w = np.linalg.solve(A, np.concatenate([c[:n], [1.0]]))
        # distance to each facet hyperplane = |w_k| * height of vertex k
        heights = 1.0 / np.linalg.norm(np.linalg.inv(A)[:, :n], axis=1)
        if np.min(np.abs(w) * heights) < 1e-6:
            continue
        tested += 1
        disagree += (abs(containment_fn(V, c, n)) == n + 1) != bool(np.all(w > 0))
    el = time.perf_counter() - t
    assert record(5, disagree == 0 and el < 5, f"{disagree} disagreements in {tested} pairs, {el:.2f} s")


def test_6_astar_matches_dijkstra(record):
    rng = np.random.default_rng(6)
    t = time.perf_counter()
    worst, paths = 0.0, 0
    for _ in range(50):
        free = rng.random((64, 64, 64)) >= 0.2
        cells = np.argwhere(free)
        s, g = (tuple(cells[k]) for k in rng.choice(len(cells), 2, replace=False))
        try:
            _, cost = grid_astar(free, s, g)
        except NoPathError:
            cost = np.inf
        ref = dijkstra_cost(free, s, g, limit=cost + 1.0 if np.isfinite(cost) else np.inf)
        paths += np.isfinite(cost)
        worst = max(worst, 0.0 if cost == ref else abs(cost - ref))
    el = time.perf_counter() - t
    assert record(6, worst <= 1e-9 and el < 60, f"max |A* - Dijkstra| = {worst:.2e} on 50 grids ({paths} connected), {el:.1f} s")


def test_7_commanded_snap_is_realised(record):
    rng = np.random.default_rng(7)
    P = QuadParams()
    t = time.perf_counter()
    worst = 0.0
    h, dt = 0.025, 0.005
    for _ in range(100):
        x = QuadState.hover(rng.uniform(-5, 5, 3), P).as_array()
        x[3:6] = rng.normal(size=3) * 0.5
        x[6:9] = rng.uniform(-0.2, 0.2, 3)
        x[9:12] = rng.normal(size=3) * 0.2
        x[12] *= rng.uniform(0.9, 1.1)
        x[13] = rng.normal() * 0.5
        cmd = OuterCommand(rng.normal(size=3), float(rng.normal()))

        def f(_, y):
            return extended_derivative(y, feedback_linearize(y, cmd, P, saturate=False).as_array(), P)
        _, Y = rk4_integrate(f, 0.0, x, dt, int(round(4 * h / dt)))
        r = Y[:: int(round(h / dt)), :3]
        snap = (r[0] - 4 * r[1] + 6 * r[2] - 4 * r[3] + r[4]) / h ** 4
        worst = max(worst, np.linalg.norm(snap - cmd.s) / np.linalg.norm(cmd.s))
    el = time.perf_counter() - t
    assert record(7, worst < 1e-3 and el < 30, f"max relative snap error {worst:.2e} over 100 states, {el:.1f} s")


@pytest.mark.slow
def test_8_nine_agent_maneuver(record):
    scn = load_scenario(SCENARIOS / "nine_agent.json")
    t = time.perf_counter()
    rep = run_pipeline(scn, RunFlags(dt=1e-3))
    assert rep.failed_stage is None, rep.error
    plan = rep.plan
    T = plan.tf - plan.t0
    checks = rep.audit["checks"]
    # one second shorter must break the deviation bound in the nonlinear model too
    mon = SafetyMonitor(scn.delta, scn.epsilon, scn.r_max, scn.grid)
    top = build_topology(Formation.build(scn.positions, scn.leader_ids))
    simulate_nonlinear(plan.with_final_time(plan.tf - 1.0), top, scn.positions, scn.params, scn.gains,
                       SimConfig(dt=1e-3), mon)
    shorter = mon.report()["checks"]["deviation"]
    el = time.perf_counter() - t
    ok = (np.isfinite(T) and rep.audit["pass"] and not shorter["pass"] and el < 300
          and plan.thetaf[1] == -0.8 and scn.grid is not None)
    assert record(8, ok, (
        f"T*={T:g} s; deviation {checks['deviation']['worst']:.5f} <= {scn.delta}; "
        f"separation {checks['separation']['worst']:.4f} > {2 * scn.epsilon}; "
        f"containment {checks['containment']['worst']:.4f} <= {scn.r_max}; "
        f"T*-1 deviation {shorter['worst']:.5f}; {el:.0f} s"))


def test_9_gain_stability(record):
    good = check_gain_stability([4, 6, 4, 1])
    quad = np.allclose(quartic_roots([4, 6, 4, 1]), -1.0, atol=1e-3)
    bad = check_gain_stability([1, 1, 1, 1])
    rng = np.random.default_rng(9)
    mismatch = 0
    for _ in range(1000):
        k = rng.uniform(0.01, 20, 4)
        mismatch += routh_hurwitz(*k) != bool(np.all(quartic_roots(k).real < 0))
    ok = good.stable and quad and not bad.stable and mismatch == 0
    assert record(9, ok, f"(4,6,4,1) stable={good.stable}, (1,1,1,1) stable={bad.stable}, {mismatch}/1000 mismatches")


@pytest.mark.slow
def test_10_thread_count_determinism(record, tmp_path):
    scn = SCENARIOS / "nine_agent.json"
    codes = [main(["run", "--scenario", str(scn), "--out", str(tmp_path / f"t{n}"), "--threads", str(n), "--quiet"])
             for n in (1, 4)]
    same = filecmp.cmp(tmp_path / "t1" / "trajectory.csv", tmp_path / "t4" / "trajectory.csv", shallow=False)
    assert record(10, same and codes == [0, 0], f"trajectory.csv identical for --threads 1 and 4: {same}; exit codes {codes}")
