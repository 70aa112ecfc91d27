"""Linear error dynamics of the swarm under feedback linearization.

With E = Y - Y_a the stacked deviation from the global desired positions,
every agent obeys E⁗ = k1 L E⃛ + k2 L Ë + k3 L Ė + k4 L E - Y_a⁗ where
Y_a⁗ = H R_L⁗ comes from the leaders' planned motion. The three spatial
axes decouple and share one 4N×4N matrix A; they are carried as the
three columns of a (4N, 3) state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..planner.trajectory import MotionPlan


def error_matrix(L: ArrayLike, gains: ArrayLike) -> NDArray[np.float64]:
    """A with blocks [[0,I,0,0],[0,0,I,0],[0,0,0,I],[K4 L, K3 L, K2 L, K1 L]]."""
    L = np.asarray(L, dtype=float)
    N = L.shape[0]
    K = np.broadcast_to(np.asarray(gains, dtype=float), (N, 4))
    A = np.zeros((4 * N, 4 * N))
    I = np.eye(N)
    for b in range(3):
        A[b * N:(b + 1) * N, (b + 1) * N:(b + 2) * N] = I
    for j, col in enumerate((3, 2, 1, 0)):  # E, Ė, Ë, E⃛ use k4, k3, k2, k1
        A[3 * N:, j * N:(j + 1) * N] = K[:, col:col + 1] * L
    return A


def error_eigenvalues(L: ArrayLike, gains: ArrayLike) -> NDArray[np.complex128]:
    """Spectrum of A.

    With identical gains on every agent, each eigenvalue μ of L contributes
    the four roots of s⁴ - μ(k1 s³ + k2 s² + k3 s + k4). Otherwise the
    dense matrix is diagonalised.
    """
    L = np.asarray(L, dtype=float)
    K = np.atleast_2d(np.asarray(gains, dtype=float))
    if K.shape[0] == 1 or np.all(K == K[0]):
        k = K[0]
        out = [np.roots([1.0, -mu * k[0], -mu * k[1], -mu * k[2], -mu * k[3]]) for mu in np.linalg.eigvals(L)]
        return np.concatenate(out)
    return np.linalg.eigvals(error_matrix(L, K))


@dataclass
class ErrorSystem:
    """Error dynamics of one planned maneuver.

    ``H`` maps leader positions to all agents (N, n+1); ``r0`` are the
    initial positions; the forcing is -H R_L⁗(t).
    """

    L: NDArray[np.float64]
    gains: NDArray[np.float64]
    H: NDArray[np.float64]
    leader_ids: tuple
    r0: NDArray[np.float64]
    plan: MotionPlan

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        self.N = self.L.shape[0]
        self.gains = np.broadcast_to(np.asarray(self.gains, dtype=float), (self.N, 4)).copy()
        self.A = error_matrix(self.L, self.gains)

    def eigenvalues(self) -> NDArray[np.complex128]:
        return error_eigenvalues(self.L, self.gains)

    def leader_snap(self, t: ArrayLike, left: bool = False) -> NDArray[np.float64]:
        """R_L⁗(t), shape (*t.shape, n+1, 3)."""
        return self.plan.desired_positions(t, self.r0[list(self.leader_ids)], left=left)[4]

    def forcing(self, t: ArrayLike, left: bool = False) -> NDArray[np.float64]:
        """-H R_L⁗(t), shape (*t.shape, N, 3)."""
        return -np.einsum("ij,...jk->...ik", self.H, self.leader_snap(t, left))

    def rest_initial_state(self) -> NDArray[np.float64]:
        """E at t0 for agents at rest on their desired positions.

        Desired positions start at rest except for the jerk of the quintic
        blend, so E = Ė = Ë = 0 and E⃛ = -Y_a⃛(t0).
        """
        E = np.zeros((4 * self.N, 3))
        jet = self.plan.desired_positions(self.plan.t0, self.r0)
        for k in range(1, 4):
            E[k * self.N:(k + 1) * self.N] = -jet[k]
        return E


@dataclass
class ErrorTrajectory:
    t: NDArray[np.float64]
    deviation: NDArray[np.float64]  # (K, N) position error norms
    E: NDArray[np.float64] | None = None  # (K, 4N, 3) when requested

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    def worst(self) -> tuple[float, int, float]:
        k, i = np.unravel_index(int(np.argmax(self.deviation)), self.deviation.shape)
        return float(self.t[k]), int(i), float(self.deviation[k, i])


def _rk4_maps(A: NDArray, h: float, N: int):
    """State map and forcing maps of one RK4 step of x' = A x + B u(t).

    The forcing enters only the last N rows, so the forcing maps are
    restricted to those columns.
    """
    n = A.shape[0]
    I = np.eye(n)
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    Mx = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    P0 = (h / 6) * (I + hA + hA2 / 2 + hA3 / 4)
    Ph = (h / 6) * (4 * I + 2 * hA + hA2 / 2)
    P1 = (h / 6) * I
    sl = slice(n - N, n)
    return Mx, P0[:, sl], Ph[:, sl], P1[:, sl]


def simulate_error_dynamics(
    system: ErrorSystem,
    t0: float | None = None,
    tf: float | None = None,
    dt: float = 0.01,
    E0: ArrayLike | str | None = "rest",
    keep_states: bool = False,
    chunk: int = 2000,
) -> ErrorTrajectory:
    """Integrate the forced error dynamics with RK4.

    Steps are aligned with the waypoint times. The desired jerk jumps there
    (the quintic blend starts and ends with nonzero jerk), which enters the
    error as a jump of E⃛ by minus the jump of Y_a⃛.

    ``E0`` is an explicit (4N, 3) state, ``"rest"`` for agents starting at
    rest on their desired positions, or ``None``/``"zero"`` for E(t0) = 0.
    """
    plan = system.plan
    t0 = plan.t0 if t0 is None else t0
    tf = plan.tf if tf is None else tf
    N = system.N
    if isinstance(E0, str) and E0 == "rest":
        x = system.rest_initial_state()
    elif E0 is None or (isinstance(E0, str) and E0 == "zero"):
        x = np.zeros((4 * N, 3))
    else:
        x = np.array(E0, dtype=float).reshape(4 * N, 3)

    ts = plan.time_grid(dt, t0, tf)
    steps = len(ts) - 1
    knots = plan.knot_times[1:-1]
    jump_at = {int(k) for k in np.flatnonzero(np.isin(ts, knots))}
    if jump_at:
        tk = ts[sorted(jump_at)]
        dj = (plan.desired_positions(tk, system.r0, order=3)[3]
              - plan.desired_positions(tk, system.r0, order=3, left=True)[3])
        jumps = dict(zip(sorted(jump_at), dj))
    maps: dict = {}

    dev = np.empty((steps + 1, N))
    dev[0] = np.linalg.norm(x[:N], axis=1)
    states = np.empty((steps + 1, 4 * N, 3)) if keep_states else None
    if keep_states:
        states[0] = x
    for c0 in range(0, steps, chunk):
        c1 = min(c0 + chunk, steps)
        a, b = ts[c0:c1], ts[c0 + 1:c1 + 1]
        u_start = system.forcing(a)
        u_mid = system.forcing(0.5 * (a + b))
        u_end = system.forcing(b, left=True)
        for k in range(c1 - c0):
            j = c0 + k
            if j in jump_at:
                x[3 * N:] -= jumps[j]
            h = float(b[k] - a[k])
            key = round(h, 12)
            if key not in maps:
                maps[key] = _rk4_maps(system.A, h, N)
            Mx, P0, Ph, P1 = maps[key]
            x = Mx @ x + P0 @ u_start[k] + Ph @ u_mid[k] + P1 @ u_end[k]
            dev[j + 1] = np.linalg.norm(x[:N], axis=1)
            if keep_states:
                states[j + 1] = x
    return ErrorTrajectory(ts, dev, states)
