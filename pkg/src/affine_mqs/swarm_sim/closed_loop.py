"""Nonlinear closed-loop simulation of the whole swarm.

Leaders track their planned trajectories r_{i,a}(t). A follower's reference
is the weighted sum of its in-neighbors' *current* states, including their
first three derivatives, so under exact feedback linearization the stacked
deviations obey the linear error dynamics.

Per-agent work inside each RK4 stage is split into fixed-size agent
chunks. The chunking never depends on the thread count, so results are
bit-identical whatever ``threads`` is.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from ..planner.trajectory import MotionPlan
from ..vehicle import STATE_DIM, Gains, QuadParams, VehicleSingularityError
from .audit import SafetyMonitor
from .kernels import chain_kernel, rhs_kernel

AGENT_CHUNK = 16


@dataclass
class SimConfig:
    dt: float = 1e-3
    log_dt: float = 0.1
    threads: int = 1
    monitor_chunk: int = 1000  # integrator steps per monitor/reference batch


@dataclass
class TrajectoryLog:
    t: NDArray[np.float64]
    positions: NDArray[np.float64]  # (K, N, 3)
    desired: NDArray[np.float64]  # (K, N, 3)
    centers: NDArray[np.float64]  # (K, 3)
    thrust: NDArray[np.float64]  # (K, N)
    euler: NDArray[np.float64]  # (K, N, 3)
    aborted: dict | None = None
    final_state: NDArray[np.float64] | None = None
    steps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def deviation(self) -> NDArray[np.float64]:
        return np.linalg.norm(self.positions - self.desired, axis=-1)

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())


def initial_swarm_state(plan: MotionPlan, r0, params: QuadParams) -> NDArray[np.float64]:
    """Every agent hovering at rest on its desired position at t0."""
    ra = plan.desired_positions(plan.t0, r0, order=0)[0]
    X = np.zeros((len(ra), STATE_DIM))
    X[:, 0:3] = ra
    X[:, 12] = params.hover_thrust
    return X


class _Stage:
    """Right-hand side of the swarm with fixed agent chunking."""

    def __init__(self, topology, gains: Gains, params: QuadParams, threads: int):
        self.params = params
        self.N = topology.N
        self.leaders = np.array(topology.leader_ids, dtype=int)
        self.followers = np.array(sorted(topology.in_neighbors), dtype=int)
        nbr, w = topology.neighbor_arrays()
        self.nbr = nbr[self.followers]
        self.w = w[self.followers]
        self.k = np.asarray(gains.position, dtype=float)
        self.kpsi = (float(gains.k_psi1), float(gains.k_psi2))
        self.bounds = [(a, min(a + AGENT_CHUNK, self.N)) for a in range(0, self.N, AGENT_CHUNK)]
        self.pool = ThreadPoolExecutor(threads) if threads > 1 and len(self.bounds) > 1 else None
        P = params
        self.consts = (P.mass, P.g, np.ascontiguousarray(P.inertia), np.ascontiguousarray(P.J_inv),
                       float(P.gyro_sign), P.p_floor_frac * P.hover_thrust,
                       np.inf if P.u_p_limit is None else float(P.u_p_limit),
                       np.inf if P.torque_limit is None else float(P.torque_limit))
        self.chain = np.empty((self.N, 4, 3))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __call__(self, X: NDArray, leader_jet: NDArray) -> NDArray:
        m, g, J, Ji, sigma, pfl, ulim, tlim = self.consts
        chain = self.chain
        chain_kernel(X, m, g, chain)
        ref = np.empty_like(chain)
        ref[self.leaders] = leader_jet
        # fixed-order weighted sum over the n+1 in-neighbors
        acc = self.w[:, 0, None, None] * chain[self.nbr[:, 0]]
        for k in range(1, self.nbr.shape[1]):
            acc = acc + self.w[:, k, None, None] * chain[self.nbr[:, k]]
        ref[self.followers] = acc
        out = np.empty_like(X)

        def run(bounds):
            return rhs_kernel(X, ref, self.k, self.kpsi[0], self.kpsi[1], m, g, J, Ji, sigma, pfl,
                              ulim, tlim, bounds[0], bounds[1], out)

        bad = list(self.pool.map(run, self.bounds)) if self.pool else [run(b) for b in self.bounds]
        if any(bad):
            raise VehicleSingularityError("thrust at the floor or pitch at the singularity margin")
        return out


def simulate_nonlinear(
    plan: MotionPlan,
    topology,
    r0,
    params: QuadParams,
    gains: Gains,
    config: SimConfig | None = None,
    monitor: SafetyMonitor | None = None,
    X0: NDArray | None = None,
) -> TrajectoryLog:
    """Step all vehicles with RK4 over [t0, tf].

    The monitor (if any) observes every integrator step; the returned log
    keeps samples every ``log_dt`` (and always the final step). A vehicle
    singularity stops the run and is recorded in ``log.aborted``.
    """
    cfg = config or SimConfig()
    r0 = np.asarray(r0, dtype=float)
    N = len(r0)
    ts = plan.time_grid(cfg.dt)
    steps = len(ts) - 1
    stride = max(int(round(cfg.log_dt / cfg.dt)), 1)
    X = initial_swarm_state(plan, r0, params) if X0 is None else np.array(X0, dtype=float)
    rL0 = r0[list(topology.leader_ids)]
    stage = _Stage(topology, gains, params, cfg.threads)

    logged = {"t": [], "pos": [], "des": [], "cen": [], "p": [], "eul": []}

    def keep(t, Xk, ra, c):
        logged["t"].append(t)
        logged["pos"].append(Xk[:, 0:3].copy())
        logged["des"].append(ra)
        logged["cen"].append(c)
        logged["p"].append(Xk[:, 12].copy())
        logged["eul"].append(Xk[:, 6:9].copy())

    def leader_jets(t, left=False):
        return np.moveaxis(plan.desired_positions(t, rL0, order=3, left=left), 0, -2)  # (K, n+1, 4, 3)

    aborted = None
    k_done = 0
    try:
        for c0 in range(0, steps, cfg.monitor_chunk):
            c1 = min(c0 + cfg.monitor_chunk, steps)
            t_nodes = ts[c0:c1 + 1]
            a, b = t_nodes[:-1], t_nodes[1:]
            # reference over each step: right limit at its start, left limit at its end
            jet_a, jet_m, jet_b = leader_jets(a), leader_jets(0.5 * (a + b)), leader_jets(b, left=True)
            ra_all = plan.desired_positions(t_nodes, r0, order=0)[0]
            d_all = plan.displacement(t_nodes, order=0)[0]
            pos = np.empty((c1 - c0 + 1, N, 3))
            pos[0] = X[:, 0:3]
            if c0 == 0:
                keep(float(t_nodes[0]), X, ra_all[0], d_all[0])
            for j in range(c1 - c0):
                h = float(b[j] - a[j])
                k1 = stage(X, jet_a[j])
                k2 = stage(X + 0.5 * h * k1, jet_m[j])
                k3 = stage(X + 0.5 * h * k2, jet_m[j])
                k4 = stage(X + h * k3, jet_b[j])
                X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if not np.all(np.isfinite(X)):
                    raise VehicleSingularityError("state became non-finite")
                k_done = c0 + j + 1
                pos[j + 1] = X[:, 0:3]
                if k_done % stride == 0 or k_done == steps:
                    keep(float(t_nodes[j + 1]), X, ra_all[j + 1], d_all[j + 1])
            if monitor is not None:
                first = 0 if c0 == 0 else 1
                monitor.observe(t_nodes[first:], pos[first:], ra_all[first:], d_all[first:])
    except VehicleSingularityError as exc:
        aborted = {"t": float(ts[k_done]), "reason": str(exc)}
    finally:
        stage.close()

    return TrajectoryLog(
        t=np.array(logged["t"]),
        positions=np.array(logged["pos"]),
        desired=np.array(logged["des"]),
        centers=np.array(logged["cen"]),
        thrust=np.array(logged["p"]),
        euler=np.array(logged["eul"]),
        aborted=aborted,
        final_state=X,
        steps=k_done,
        meta={"dt": cfg.dt, "log_stride": stride},
    )
