"""Safety monitoring of swarm trajectories.

Four checks run on every observed sample:

* separation: ‖r_i - r_j‖ > 2ε for every pair
* containment: ‖r_i - d(t)‖ ≤ r_max (closed ball)
* deviation: ‖r_i - r_{i,a}‖ ≤ δ
* clearance: distance from every agent to occupied cells > ε (when a grid is given)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

CHECKS = ("separation", "containment", "deviation", "clearance")
HASH_THRESHOLD = 64


@dataclass
class _Stat:
    worst: float
    t: float | None = None
    agents: tuple = ()
    violations: int = 0
    first: dict | None = None


@dataclass
class SafetyMonitor:
    delta: float
    epsilon: float
    r_max: float
    grid: object | None = None
    samples: int = 0
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stats = {
            "separation": _Stat(np.inf),
            "containment": _Stat(0.0),
            "deviation": _Stat(0.0),
            "clearance": _Stat(np.inf),
        }

    # --- per-check helpers -------------------------------------------------

    def _min_separation(self, P: np.ndarray):
        """Smallest pair distance per sample: (dist (K,), i (K,), j (K,))."""
        K, N, _ = P.shape
        if N < 2:
            return np.full(K, np.inf), np.zeros(K, int), np.zeros(K, int)
        if N <= HASH_THRESHOLD:
            D = np.linalg.norm(P[:, :, None, :] - P[:, None, :, :], axis=-1)
            iu = np.triu_indices(N, 1)
            pair = D[:, iu[0], iu[1]]
            k = np.argmin(pair, axis=1)
            return pair[np.arange(K), k], iu[0][k], iu[1][k]
        out = np.empty(K)
        ii, jj = np.zeros(K, int), np.zeros(K, int)
        for s in range(K):
            tree = cKDTree(P[s])
            d, idx = tree.query(P[s], k=2)
            a = int(np.argmin(d[:, 1]))
            out[s], ii[s], jj[s] = d[a, 1], min(a, idx[a, 1]), max(a, idx[a, 1])
        return out, ii, jj

    def _record(self, name: str, values: np.ndarray, t: np.ndarray, agents, bad: np.ndarray, lower_is_worse: bool):
        st = self.stats[name]
        k = int(np.argmin(values) if lower_is_worse else np.argmax(values))
        v = float(values[k])
        if (v < st.worst) if lower_is_worse else (v > st.worst):
            st.worst, st.t, st.agents = v, float(t[k]), tuple(int(a) for a in agents[k])
        nb = int(bad.sum())
        if nb:
            st.violations += nb
            if st.first is None:
                f = int(np.argmax(bad))
                st.first = {"t": float(t[f]), "agents": [int(a) for a in agents[f]], "value": float(values[f])}

    def observe(self, t, positions, desired, centers) -> None:
        """Check a batch of samples: t (K,), positions/desired (K, N, 3), centers (K, 3)."""
        t = np.atleast_1d(np.asarray(t, float))
        P = np.asarray(positions, float).reshape(len(t), -1, 3)
        A = np.asarray(desired, float).reshape(P.shape)
        C = np.asarray(centers, float).reshape(len(t), 3)
        self.samples += len(t)

        sep, i, j = self._min_separation(P)
        self._record("separation", sep, t, np.stack([i, j], 1), sep <= 2 * self.epsilon, True)

        rad = np.linalg.norm(P - C[:, None, :], axis=-1)
        a = np.argmax(rad, axis=1)
        worst = rad[np.arange(len(t)), a]
        self._record("containment", worst, t, a[:, None], worst > self.r_max, False)

        dev = np.linalg.norm(P - A, axis=-1)
        a = np.argmax(dev, axis=1)
        worst = dev[np.arange(len(t)), a]
        self._record("deviation", worst, t, a[:, None], worst > self.delta, False)

        if self.grid is not None:
            flat = P.reshape(-1, 3)
            rel = (flat - self.grid.origin) / self.grid.cell_size
            inside = np.all((rel >= 0) & (rel < np.array(self.grid.dims)), axis=1)
            clr = np.full(len(flat), np.inf)
            if inside.any():
                clr[inside] = self.grid.min_clearance_fast(flat[inside], self.epsilon)
            clr = clr.reshape(len(t), -1)
            a = np.argmin(clr, axis=1)
            worst = clr[np.arange(len(t)), a]
            self._record("clearance", worst, t, a[:, None], worst <= self.epsilon, True)

    def report(self) -> dict:
        checks = {}
        for name in CHECKS:
            st = self.stats[name]
            active = name != "clearance" or self.grid is not None
            checks[name] = {
                "checked": active,
                "pass": (st.violations == 0) if active else True,
                "worst": _finite(st.worst) if active else None,
                "worst_t": st.t,
                "worst_agents": list(st.agents),
                "violations": st.violations,
                "first_violation": st.first,
            }
        checks["separation"]["bound"] = 2 * self.epsilon
        checks["containment"]["bound"] = self.r_max
        checks["deviation"]["bound"] = self.delta
        checks["clearance"]["bound"] = self.epsilon
        return {"pass": all(c["pass"] for c in checks.values()), "samples": self.samples, "checks": checks}


def _finite(v: float):
    return float(v) if np.isfinite(v) else None


def audit_safety(log, monitor: SafetyMonitor) -> dict:
    """Audit report for a trajectory log.

    A monitor that already observed the run (as during simulation, where it
    sees every integrator step) is reported as is; a fresh monitor is run
    over the log's samples first.
    """
    if monitor.samples == 0:
        monitor.observe(log.t, log.positions, log.desired, log.centers)
    rep = monitor.report()
    if getattr(log, "aborted", None):
        rep["pass"] = False
        rep["aborted"] = log.aborted
    return rep


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
