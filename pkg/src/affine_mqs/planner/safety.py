"""Eigenvalue safety window, shear-angle selection and plan validation.

With every agent within δ of its global desired position, two conditions
on the stretch eigenvalues keep the swarm safe:

* λ1(t) > λ_min = 2(δ+ε)/d_min   (pairwise separation above 2ε)
* |λ_i(t)| ≤ λ_max = (r_max-δ-ε)/d_max   (agents inside the ball of radius r_max)

d_min is the smallest |projection| of initial pair separations on û1, so
β5, β6 are chosen to make that number as large as possible.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..affine_core import build_jacobian, point_dimension, rotation_matrix

SAFETY_TOL = 1e-9


class InfeasibleSafetyError(ValueError):
    pass


# --- closed-form bounds ---------------------------------------------------


def lambda_min_bound(delta: float, epsilon: float, d_min: float) -> float:
    return 2.0 * (delta + epsilon) / d_min


def lambda_max_bound(r_max: float, delta: float, epsilon: float, d_max: float) -> float:
    return (r_max - delta - epsilon) / d_max


def r_max_for(lambda_max: float, delta: float, epsilon: float, d_max: float) -> float:
    """Containment radius that produces the given λ_max."""
    return lambda_max * d_max + delta + epsilon


# --- shear angles ---------------------------------------------------------


def shear_direction(beta5: ArrayLike, beta6: ArrayLike) -> NDArray[np.float64]:
    """û1(0, β5, β6) = (cβ5 cβ6, cβ5 sβ6, -sβ5)."""
    return rotation_matrix(np.zeros_like(np.asarray(beta5, float)), beta5, beta6)[..., 0, :]


def min_projection_gap(positions: ArrayLike, directions: ArrayLike) -> NDArray[np.float64]:
    """min over pairs |(r_i - r_j)·u| for each direction u (rows of ``directions``).

    The minimum over pairs of projection differences is the smallest gap
    between consecutive sorted projections.
    """
    P = np.asarray(positions, dtype=float)
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    proj = np.sort(U @ P.T, axis=1)
    return np.min(np.diff(proj, axis=1), axis=1)


def _angles_from_direction(u: NDArray[np.float64]) -> tuple[float, float]:
    """(β5, β6) ∈ [0, π)² with û1(0, β5, β6) = ±u."""
    u = u / np.linalg.norm(u)
    if u[2] > 0 or (u[2] == 0 and np.arctan2(u[1], u[0]) < 0):
        u = -u
    az = float(np.arctan2(u[1], u[0]))
    el = float(np.arcsin(np.clip(-u[2], -1.0, 1.0)))  # in [0, π/2]
    if np.hypot(u[0], u[1]) < 1e-15:
        return el % np.pi, 0.0
    if az < 0 or az >= np.pi:
        az = az + np.pi if az < 0 else az - np.pi
        el = np.pi - el
    return float(el % np.pi), float(az % np.pi)


def _refine_1d(f, x0: float, step: float, levels: int = 8, pts: int = 21) -> tuple[float, float]:
    best_x, best_v = x0, float(f(np.array([x0]))[0])
    for _ in range(levels):
        xs = best_x + np.linspace(-step, step, pts)
        vs = f(xs)
        k = int(np.argmax(vs))
        if vs[k] > best_v:
            best_x, best_v = float(xs[k]), float(vs[k])
        step *= 2.0 / (pts - 1)
    return best_x, best_v


def shear_angles(positions: ArrayLike, resolution: float = 1e-3, n_starts: int = 16) -> tuple[float, float, float]:
    """(β5, β6, objective) maximizing min_{i<j} |(r_i - r_j)·û1(0, β5, β6)|.

    Coplanar formations reduce to a search over in-plane directions,
    because any out-of-plane component of û1 only shrinks every
    projection. Full 3-D formations use a coarse grid over (β5, β6)
    followed by local refinement of the best candidates.
    """
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(P) < 2:
        raise ValueError("need at least two agents")
    diffs = P[:, None, :] - P[None, :, :]
    dist = np.linalg.norm(diffs, axis=-1)
    iu = np.triu_indices(len(P), 1)
    if np.min(dist[iu]) == 0.0:
        i, j = (int(a[np.argmin(dist[iu])]) for a in iu)
        raise ValueError(f"agents {i} and {j} coincide")
    dim = point_dimension(P)
    _, _, Vt = np.linalg.svd(P - P.mean(axis=0))

    if dim == 1:
        u = Vt[0]
    elif dim == 2:
        ea, eb = Vt[0], Vt[1]

        def f(alpha):
            alpha = np.atleast_1d(alpha)
            U = np.cos(alpha)[:, None] * ea + np.sin(alpha)[:, None] * eb
            return min_projection_gap(P, U)

        grid = np.arange(0.0, np.pi, resolution)
        vals = f(grid)
        cands = np.argsort(vals)[::-1][:n_starts]
        best = max((_refine_1d(f, grid[k], resolution) for k in cands), key=lambda r: r[1])
        u = np.cos(best[0]) * ea + np.sin(best[0]) * eb
    else:
        def f2(b):
            b = np.atleast_2d(b)
            return min_projection_gap(P, shear_direction(b[:, 0], b[:, 1]))

        coarse = max(resolution, 1e-2)
        g5, g6 = np.meshgrid(np.arange(0, np.pi, coarse), np.arange(0, np.pi, coarse), indexing="ij")
        B = np.stack([g5.ravel(), g6.ravel()], axis=1)
        vals = np.concatenate([f2(B[k:k + 4096]) for k in range(0, len(B), 4096)])
        cands = B[np.argsort(vals)[::-1][:n_starts]]
        best_b, best_v = None, -np.inf
        for b in cands:
            step = coarse
            cur, cur_v = b.copy(), float(f2(b)[0])
            for _ in range(8):
                off = np.linspace(-step, step, 11)
                G = np.stack(np.meshgrid(cur[0] + off, cur[1] + off, indexing="ij"), -1).reshape(-1, 2)
                v = f2(G)
                k = int(np.argmax(v))
                if v[k] > cur_v:
                    cur, cur_v = G[k], float(v[k])
                step *= 0.2
            if cur_v > best_v:
                best_b, best_v = cur, cur_v
        u = shear_direction(best_b[0], best_b[1])
    b5, b6 = _angles_from_direction(np.asarray(u, float))
    obj = float(min_projection_gap(P, shear_direction(b5, b6)[None])[0])
    return b5, b6, obj


# --- safety window ----------------------------------------------------------


@dataclass(frozen=True)
class SafetyBounds:
    delta: float
    epsilon: float
    r_max: float
    d_min: float
    d_max: float
    lambda_min: float
    lambda_max: float
    beta5: float = 0.0
    beta6: float = 0.0

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


def safety_bounds(
    positions: ArrayLike,
    d0: ArrayLike,
    delta: float,
    epsilon: float,
    r_max: float,
    beta5: float,
    beta6: float,
) -> SafetyBounds:
    for name, v in (("delta", delta), ("epsilon", epsilon), ("r_max", r_max)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if not r_max > delta + epsilon:
        raise InfeasibleSafetyError(f"r_max={r_max} must exceed delta+epsilon={delta + epsilon}")
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    u = shear_direction(beta5, beta6)
    d_min = float(min_projection_gap(P, u[None])[0])
    d_max = float(np.max(np.linalg.norm(P - np.asarray(d0, float), axis=1)))
    if d_min <= 0:
        raise InfeasibleSafetyError("two agents share the same projection on the shear axis (d_min = 0)")
    lmin = lambda_min_bound(delta, epsilon, d_min)
    lmax = lambda_max_bound(r_max, delta, epsilon, d_max)
    if lmin >= lmax:
        raise InfeasibleSafetyError(
            f"empty eigenvalue window: lambda_min={lmin:.6g} >= lambda_max={lmax:.6g}"
        )
    return SafetyBounds(delta, epsilon, r_max, d_min, d_max, lmin, lmax, float(beta5), float(beta6))


# --- target configuration ----------------------------------------------------


@dataclass(frozen=True)
class TargetConfiguration:
    """Final map r_f = Q̄_f (r_0 - d̄_0) + d̄_f."""

    Q_f: NDArray[np.float64]
    d_f: NDArray[np.float64]

    @classmethod
    def from_theta(cls, thetaf: ArrayLike, d_f: ArrayLike) -> "TargetConfiguration":
        return cls(build_jacobian(thetaf), np.asarray(d_f, float))

    def consistent_with(self, thetaf: ArrayLike, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(build_jacobian(thetaf) - self.Q_f)) <= tol)

    def final_positions(self, r0: ArrayLike, d0: ArrayLike) -> NDArray[np.float64]:
        return (np.asarray(r0, float) - np.asarray(d0, float)) @ np.asarray(self.Q_f).T + self.d_f


# --- plan validation ---------------------------------------------------------


@dataclass
class PlanReport:
    ok: bool
    samples: int
    min_lambda1: float
    max_abs_lambda: float
    lambda_min: float
    lambda_max: float
    target_error: float | None = None
    displacement_error: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def first_violation(self) -> dict | None:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return asdict(self)


def validate_plan(plan, sample_dt: float, target: TargetConfiguration | None = None, bounds: SafetyBounds | None = None) -> PlanReport:
    """Check the eigenvalue window at every sample and the endpoint consistency.

    Violations are collected, not raised. Each entry records the kind of
    check, the first time it failed and the offending value.
    """
    bounds = bounds or plan.bounds
    if bounds is None:
        raise ValueError("plan has no safety bounds")
    n = max(int(np.ceil((plan.tf - plan.t0) / sample_dt)), 1)
    ts = np.linspace(plan.t0, plan.tf, n + 1)
    lam = plan.theta(ts, order=0)[0][:, 0:3]
    viol = []
    low = lam[:, 0] <= bounds.lambda_min
    if low.any():
        k = int(np.argmax(low))
        viol.append({"check": "lambda1_above_min", "t": float(ts[k]), "value": float(lam[k, 0]),
                     "bound": bounds.lambda_min})
    high = np.abs(lam) > bounds.lambda_max + SAFETY_TOL
    if high.any():
        k = int(np.argmax(high.any(axis=1)))
        i = int(np.argmax(np.abs(lam[k])))
        viol.append({"check": "abs_lambda_below_max", "t": float(ts[k]), "index": i + 1,
                     "value": float(lam[k, i]), "bound": bounds.lambda_max})
    d_err = float(np.max(np.abs(plan.displacement(plan.tf, order=0)[0] - plan.df)))
    if d_err > 1e-9:
        viol.append({"check": "final_displacement", "t": float(plan.tf), "value": d_err})
    t_err = None
    if target is not None:
        t_err = float(np.max(np.abs(plan.jacobian(plan.tf, order=0)[0] - target.Q_f)))
        if t_err > 1e-9:
            viol.append({"check": "final_jacobian", "t": float(plan.tf), "value": t_err})
        e = float(np.max(np.abs(target.d_f - plan.df)))
        if e > 1e-9:
            viol.append({"check": "final_displacement_target", "t": float(plan.tf), "value": e})
    viol.sort(key=lambda v: v["t"])
    return PlanReport(
        ok=not viol,
        samples=len(ts),
        min_lambda1=float(lam[:, 0].min()),
        max_abs_lambda=float(np.abs(lam).max()),
        lambda_min=bounds.lambda_min,
        lambda_max=bounds.lambda_max,
        target_error=t_err,
        displacement_error=d_err,
        violations=viol,
    )
