import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affine_mqs.affine_core import build_jacobian
from affine_mqs.planner import (
    InfeasibleSafetyError,
    MotionPlan,
    NoPathError,
    OccupancyGrid,
    PlanTimeError,
    TargetConfiguration,
    gamma,
    gamma_derivatives,
    grid_astar,
    lambda_max_bound,
    lambda_min_bound,
    min_projection_gap,
    plan_path,
    r_max_for,
    safety_bounds,
    shear_angles,
    shear_direction,
    solve_travel_time,
    validate_plan,
)
from affine_mqs.topology import Formation, build_topology
from conftest import grid9
from oracles import dijkstra_cost, fd_derivatives

# --- grid and A* ----------------------------------------------------------


def wall_grid():
    return OccupancyGrid.from_boxes([0, 0, 0], 1.0, (30, 20, 10),
                                    [[[14, -1, -1], [15, 6, 11]], [[14, 14, -1], [15, 21, 11]]])


def test_grid_text_roundtrip(tmp_path):
    g = wall_grid()
    g.save(tmp_path / "g.txt")
    h = OccupancyGrid.load(tmp_path / "g.txt")
    assert np.array_equal(g.occupied, h.occupied) and np.allclose(g.origin, h.origin)
    assert h.cell_size == g.cell_size


def test_clearance_matches_brute_force(rng):
    g = wall_grid()
    pts = rng.uniform([0, 0, 0], [30, 20, 10], (50, 3))
    occ = g.cell_centers()[g.occupied]
    # distance to the nearest occupied cell box
    half = g.cell_size / 2
    d = np.linalg.norm(np.maximum(np.abs(pts[:, None, :] - occ[None]) - half, 0.0), axis=-1).min(axis=1)
    assert np.allclose(g.clearance(pts), d, atol=1e-9)


def test_astar_empty_grid_is_straight():
    g = OccupancyGrid.empty([0, 0, 0], 1.0, (20, 20, 20))
    res = plan_path(g, [2.5, 2.5, 10.5], [17.5, 15.5, 10.5], 1.0)
    assert len(res.waypoints) == 2


def test_astar_wall_gap_matches_dijkstra():
    g = wall_grid()
    free = ~g.occupied
    path, cost = grid_astar(free, (2, 2, 5), (27, 3, 5))
    assert cost == pytest.approx(dijkstra_cost(free, (2, 2, 5), (27, 3, 5)), abs=1e-9)
    assert all(free[c] for c in path)
    steps = np.abs(np.diff(np.array(path), axis=0))
    assert steps.max() <= 1


def test_astar_enclosed_goal():
    free = np.ones((10, 10, 10), bool)
    free[4:7, 4:7, 4:7] = False
    free[5, 5, 5] = True
    with pytest.raises(NoPathError):
        grid_astar(free, (0, 0, 0), (5, 5, 5))


def test_heuristic_does_not_change_cost(rng):
    free = rng.random((20, 20, 20)) > 0.25
    free[0, 0, 0] = free[19, 19, 19] = True
    try:
        _, c1 = grid_astar(free, (0, 0, 0), (19, 19, 19))
    except NoPathError:
        pytest.skip("random grid disconnected")
    _, c2 = grid_astar(free, (0, 0, 0), (19, 19, 19), use_heuristic=False)
    assert c1 == pytest.approx(c2, abs=1e-9)


def test_path_keeps_ball_clear():
    g = OccupancyGrid.from_boxes([0, 0, 0], 0.5, (80, 60, 24),
                                 [[[19.5, -1, -1], [20.5, 10, 13]], [[19.5, 20, -1], [20.5, 31, 13]]])
    res = plan_path(g, [6, 8, 6], [34, 8, 6], 3.5)
    ts = np.linspace(0, 1, 200)
    for a, b in zip(res.waypoints[:-1], res.waypoints[1:]):
        pts = a + ts[:, None] * (b - a)
        assert g.clearance(pts).min() >= 3.5 - 1e-9


# --- blending and plan ----------------------------------------------------


def test_gamma_endpoints_and_midpoint():
    assert gamma(2.0, 2.0, 4.0)[0] == 0.0
    assert gamma(6.0, 2.0, 4.0)[0] == pytest.approx(1.0)
    assert gamma(4.0, 2.0, 4.0)[0] == pytest.approx(0.5)
    for t in (2.0, 6.0):
        g = gamma(t, 2.0, 4.0)
        assert abs(g[1]) < 1e-15 and abs(g[2]) < 1e-15
    with pytest.raises(PlanTimeError):
        gamma(7.0, 2.0, 4.0)


def test_gamma_derivatives_match_fd():
    T = 3.0
    s = np.linspace(0.01, 0.99, 100)
    h = 1e-5
    g = gamma_derivatives(s, T)
    fd = (gamma_derivatives(s + h / T, T)[0] - gamma_derivatives(s - h / T, T)[0]) / (2 * h)
    assert np.max(np.abs(fd - g[1])) < 1e-6
    for k in range(1, 4):
        fdk = (gamma_derivatives(s + h / T, T)[k] - gamma_derivatives(s - h / T, T)[k]) / (2 * h)
        assert np.allclose(fdk, g[k + 1], rtol=1e-5, atol=1e-5)


def make_plan(tf=20.0, lam2=-0.8, rot=(0, 0, 0)):
    W = np.array([[0, 0, 5], [10, 3, 5], [20, 0, 7.0]])
    th0 = np.array([1, 1, 1, 0, 0, 0, 0, 0.1, 2.8])
    thf = th0.copy()
    thf[1] = lam2
    thf[3:6] = rot
    return MotionPlan(W, 0.0, tf, th0, thf)


def test_displacement_values():
    p = make_plan()
    kt = p.knot_times
    assert np.allclose(p.displacement(kt[1], order=0)[0], p.waypoints[1])
    mid = 0.5 * (kt[0] + kt[1])
    assert np.allclose(p.displacement(mid, order=0)[0], 0.5 * (p.waypoints[0] + p.waypoints[1]))
    v = p.displacement(np.linspace(0, 20, 801), order=1)[1]
    # velocity points along the current segment and stops at waypoints
    for t in kt:
        assert np.allclose(p.displacement(t, order=1)[1], 0.0, atol=1e-12)
    seg_dirs = np.diff(p.waypoints, axis=0)
    seg = np.searchsorted(kt, np.linspace(0, 20, 801), side="right") - 1
    seg = np.clip(seg, 0, 1)
    assert np.all(np.einsum("ij,ij->i", v, seg_dirs[seg]) >= -1e-12)


def test_theta_waypoint_values_and_monotone_lambda():
    p = make_plan()
    assert np.allclose(p.theta(0.0, 0)[0], p.theta0)
    assert np.allclose(p.theta(20.0, 0)[0], p.thetaf)
    for t, tb in zip(p.knot_times, p.theta_bars):
        assert np.allclose(p.theta(t, 0)[0], tb, atol=1e-12)
    lam2 = p.theta(np.linspace(0, 20, 500), 0)[0][:, 1]
    assert np.all(np.diff(lam2) <= 1e-15) and lam2[0] == 1 and lam2[-1] == pytest.approx(-0.8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_jacobian_jets_match_finite_differences(frac, rot):
    p = make_plan(rot=rot)
    k = p.knot_times
    # stay inside the first segment so the jet is smooth
    t = k[0] + frac * (k[1] - k[0])
    Qj = p.jacobian(t, order=4)
    fd = fd_derivatives(lambda s: build_jacobian(p.theta(s, 0)[0]), t, 2e-2, 4)
    # tolerances sit at the O(h²) truncation error of the stencils
    for j, tol in ((1, 2e-5), (2, 1e-4), (3, 2e-3), (4, 5e-3)):
        scale = max(1.0, np.abs(Qj[j]).max())
        assert np.max(np.abs(Qj[j] - fd[j])) / scale < tol
    assert np.allclose(Qj[0], build_jacobian(p.theta(t, 0)[0]), atol=1e-13)


def test_left_and_right_limits_at_knot():
    p = make_plan()
    t = p.knot_times[1]
    r = p.displacement(t, 4)
    l = p.displacement(t, 4, left=True)
    assert np.allclose(r[:3], l[:3], atol=1e-12)
    assert not np.allclose(r[3], l[3])  # the planned jerk jumps at waypoints


def test_time_grid_hits_knots():
    p = make_plan(tf=17.3)
    g = p.time_grid(0.1)
    for k in p.knot_times:
        assert np.min(np.abs(g - k)) == 0.0
    assert np.max(np.diff(g)) <= 0.1 + 1e-12


# --- safety ---------------------------------------------------------------


def test_lambda_bounds_formulas():
    assert lambda_min_bound(0.115, 0.1, 0.4387) == pytest.approx(0.98017, abs=1e-4)
    assert r_max_for(1.1243, 0.115, 0.1, 38.0555) == pytest.approx(43.0, abs=0.1)
    assert lambda_max_bound(0.115 + 0.1 + 7.0, 0.115, 0.1, 7.0) == pytest.approx(1.0)


def test_shear_two_agents_on_x():
    P = np.array([[0, 0, 0], [3, 0, 0]], float)
    b5, b6, obj = shear_angles(P)
    assert abs(abs(shear_direction(b5, b6)[0]) - 1) < 1e-9
    assert obj == pytest.approx(3.0)


def test_shear_lattice_direction():
    v = np.array([1.0, 2.0, 2.0]) / 3.0
    P = np.arange(6)[:, None] * v * 1.5
    b5, b6, obj = shear_angles(P)
    assert abs(abs(shear_direction(b5, b6) @ v) - 1) < 1e-9
    assert obj == pytest.approx(1.5)


def test_shear_matches_brute_force_3d(rng):
    P = rng.normal(size=(7, 3)) * 3
    b5, b6, obj = shear_angles(P)
    a5, a6 = np.meshgrid(np.linspace(0, np.pi, 400), np.linspace(0, np.pi, 400), indexing="ij")
    U = shear_direction(a5.ravel(), a6.ravel())
    brute = min_projection_gap(P, U).max()
    assert obj >= brute - 1e-3


def test_shear_objective_equals_bound_dmin():
    P = grid9()
    b5, b6, obj = shear_angles(P)
    sb = safety_bounds(P, P.mean(0), 0.115, 0.1, 3.5, b5, b6)
    assert sb.d_min == pytest.approx(obj)


def test_empty_window_raises():
    P = grid9(spacing=0.3)
    b5, b6, _ = shear_angles(P)
    with pytest.raises(InfeasibleSafetyError):
        safety_bounds(P, P.mean(0), 0.115, 0.1, 1.0, b5, b6)


def _plan_with_bounds(lam2f, lmin=0.9802, lmax=1.1243):
    from affine_mqs.planner.safety import SafetyBounds
    sb = SafetyBounds(0.115, 0.1, 43.0, 0.4387, 38.0555, lmin, lmax)
    p = make_plan(lam2=lam2f)
    return MotionPlan(p.waypoints, 0.0, 20.0, p.theta0, p.thetaf, sb)


def test_validate_shrinking_plan_passes():
    p = _plan_with_bounds(-0.8)
    rep = validate_plan(p, 0.05, TargetConfiguration.from_theta(p.thetaf, p.df))
    assert rep.ok and rep.min_lambda1 == 1.0


def test_validate_reports_first_violation():
    p = _plan_with_bounds(2.0, lmax=1.12)
    rep = validate_plan(p, 0.05)
    v = rep.first_violation
    assert not rep.ok and v["check"] == "abs_lambda_below_max"
    lam = p.theta(np.linspace(0, 20, 401), 0)[0][:, 1]
    first = np.linspace(0, 20, 401)[np.argmax(np.abs(lam) > 1.12)]
    assert v["t"] == pytest.approx(first)


def test_target_consistency():
    th = np.array([1, -0.8, 1, 0.1, 0.2, 0.3, 0, 0.4, 0.5])
    tc = TargetConfiguration.from_theta(th, [0, 0, 0])
    assert tc.consistent_with(th)
    th2 = th.copy()
    th2[0] += 1e-6
    assert not tc.consistent_with(th2)


# --- travel time ----------------------------------------------------------


@pytest.fixture(scope="module")
def nine_setup():
    P = grid9()
    top = build_topology(Formation.build(P, [0, 2, 6]))
    b5, b6, _ = shear_angles(P)
    th0 = np.array([1, 1, 1, 0, 0, 0, 0, b5, b6])
    thf = th0.copy()
    thf[1] = -0.8
    d0 = P.mean(0)
    plan = MotionPlan(np.array([d0, d0 + [10, 3, 0], d0 + [20, 0, 2]]), 0.0, 1.0, th0, thf, meta={"r0": P})
    from affine_mqs.vehicle import Gains
    return P, top, plan, Gains.from_pole(2.0).position


def test_travel_time_minimal_and_monotone(nine_setup):
    from affine_mqs.swarm_sim import ErrorSystem, simulate_error_dynamics
    from affine_mqs.topology import compute_H
    P, top, plan, k = nine_setup
    res = solve_travel_time(plan, top, k, 0.115)
    H = compute_H(top)

    def dev(T):
        return simulate_error_dynamics(ErrorSystem(top.L, k, H, top.leader_ids, P, plan.with_final_time(T)),
                                       dt=0.01).max_deviation
    assert dev(res.T) <= res.budget
    assert dev(res.T - 1) > res.budget
    assert dev(2 * res.T) <= res.budget


def test_travel_time_cap(nine_setup):
    from affine_mqs.planner import TravelTimeError
    P, top, plan, k = nine_setup
    with pytest.raises(TravelTimeError):
        solve_travel_time(plan, top, k, 0.115, cap=5.0)
