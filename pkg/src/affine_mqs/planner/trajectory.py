"""Temporal planning: quintic blending, rigid displacement d(t), deformation
features Θ(t) and the Jacobian Q(t) = Φ(Θ(t)), each with time derivatives
up to fourth order.

Within segment l both d(t) and Θ(t) are affine in γ(t), so derivatives of
Q are exact: every elementary rotation of Φ is differentiated in γ
analytically, the factors are combined with the Leibniz rule and the
result is pulled back to t with Faà di Bruno's formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..affine_core import DeformationFeatures, build_jacobian

ZETA = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])
MAX_ORDER = 4


class PlanTimeError(ValueError):
    pass


def gamma_derivatives(s: ArrayLike, T: ArrayLike) -> NDArray[np.float64]:
    """(γ, γ̇, γ̈, γ⃛, γ⁗) at normalised time s = (t - t_l)/T. Shape (5, *s.shape)."""
    s = np.asarray(s, dtype=float)
    T = np.asarray(T, dtype=float)
    s2, s3 = s * s, s * s * s
    return np.stack([
        10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2,
        (30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2) / T,
        (60.0 * s - 180.0 * s2 + 120.0 * s3) / T**2,
        (60.0 - 360.0 * s + 360.0 * s2) / T**3,
        (-360.0 + 720.0 * s) / T**4,
    ])


def gamma(t: float, t_l: float, T_l: float):
    """Minimum-jerk blend γ(t, T_l) on [t_l, t_l + T_l] and four time derivatives."""
    if not T_l > 0:
        raise ValueError(f"segment duration must be positive, got {T_l}")
    s = (t - t_l) / T_l
    if s < -1e-12 or s > 1 + 1e-12:
        raise PlanTimeError(f"t={t} outside segment [{t_l}, {t_l + T_l}]")
    return tuple(float(v) for v in gamma_derivatives(s, T_l))


# --- matrix jets ----------------------------------------------------------


def _leibniz(A: NDArray, B: NDArray) -> NDArray:
    """Derivatives of a product from derivatives of the factors (axis 0 = order)."""
    K = A.shape[0]
    out = np.zeros(np.broadcast_shapes(A.shape[:-1] + (B.shape[-1],), B.shape[:-2] + (A.shape[-2], B.shape[-1])))
    for k in range(K):
        for j in range(k + 1):
            out[k] += comb(k, j) * (A[j] @ B[k - j])
    return out


def _elementary_jet(axis: int, a: NDArray, da: NDArray, order: int) -> NDArray:
    """d^j/dγ^j of a single-axis rotation whose angle is a + γ·da, at the given a."""
    K = order + 1
    R = np.zeros((K,) + a.shape + (3, 3))
    i, j = [(1, 2), (0, 2), (0, 1)][axis]
    # R(X,0,0) and R(0,0,Z) put +sin above the diagonal, R(0,Y,0) below it
    sgn = -1.0 if axis == 1 else 1.0
    for k in range(K):
        scale = da**k
        c = np.cos(a + k * np.pi / 2) * scale
        s = np.sin(a + k * np.pi / 2) * scale
        R[k, ..., i, i] = c
        R[k, ..., j, j] = c
        R[k, ..., i, j] = sgn * s
        R[k, ..., j, i] = -sgn * s
        if k == 0:
            R[k, ..., axis, axis] = 1.0
    return R


def _rotation_jet(angles: NDArray, dangles: NDArray, order: int) -> NDArray:
    """Jet of R(X, Y, Z) = R(X,0,0) R(0,Y,0) R(0,0,Z) with angles affine in γ."""
    out = _elementary_jet(0, angles[..., 0], dangles[..., 0], order)
    out = _leibniz(out, _elementary_jet(1, angles[..., 1], dangles[..., 1], order))
    return _leibniz(out, _elementary_jet(2, angles[..., 2], dangles[..., 2], order))


def phi_gamma_jet(theta: NDArray, dtheta: NDArray, order: int = MAX_ORDER) -> NDArray:
    """d^j Φ(Θ + γ·ΔΘ)/dγ^j at γ = 0 for j = 0..order. Shape (order+1, ..., 3, 3)."""
    theta = np.asarray(theta, dtype=float)
    dtheta = np.broadcast_to(np.asarray(dtheta, dtype=float), theta.shape)
    K = order + 1
    Rr = _rotation_jet(theta[..., 3:6], dtheta[..., 3:6], order)
    Ru = _rotation_jet(theta[..., 6:9], dtheta[..., 6:9], order)
    Lam = np.zeros((K,) + theta.shape[:-1] + (3, 3))
    idx = np.arange(3)
    Lam[0][..., idx, idx] = theta[..., 0:3]
    if K > 1:
        Lam[1][..., idx, idx] = dtheta[..., 0:3]
    RuT = np.swapaxes(Ru, -1, -2)
    return _leibniz(_leibniz(Rr, _leibniz(RuT, Lam)), Ru)


def faa_di_bruno(f: NDArray, g: NDArray) -> NDArray:
    """Time derivatives of f(γ(t)) from γ-derivatives f[j] and time derivatives g[k] of γ.

    ``f`` has shape (5, ..., *tail) and ``g`` (5, ...); orders up to four.
    """
    K = f.shape[0]
    extra = f.ndim - g.ndim
    g = g.reshape(g.shape + (1,) * extra)
    out = np.zeros_like(f)
    out[0] = f[0]
    if K > 1:
        out[1] = f[1] * g[1]
    if K > 2:
        out[2] = f[2] * g[1] ** 2 + f[1] * g[2]
    if K > 3:
        out[3] = f[3] * g[1] ** 3 + 3 * f[2] * g[1] * g[2] + f[1] * g[3]
    if K > 4:
        out[4] = (f[4] * g[1] ** 4 + 6 * f[3] * g[1] ** 2 * g[2]
                  + f[2] * (3 * g[2] ** 2 + 4 * g[1] * g[3]) + f[1] * g[4])
    return out


# --- plan -----------------------------------------------------------------


def segment_fractions(waypoints: ArrayLike) -> NDArray[np.float64]:
    """μ_l = |d̄_{l+1} - d̄_l| / total length; a zero-length path is one segment."""
    W = np.asarray(waypoints, dtype=float)
    lengths = np.linalg.norm(np.diff(W, axis=0), axis=1)
    total = lengths.sum()
    if total == 0.0:
        return np.full(len(lengths), 1.0 / len(lengths))
    return lengths / total


@dataclass(frozen=True)
class MotionPlan:
    """Waypoints, horizon and deformation endpoints of one affine maneuver.

    ``bounds`` carries the safety window (a :class:`SafetyBounds`) once
    computed; it does not affect the trajectories.
    """

    waypoints: NDArray[np.float64]
    t0: float
    tf: float
    theta0: NDArray[np.float64]
    thetaf: NDArray[np.float64]
    bounds: object | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        W = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if len(W) == 1:
            W = np.vstack([W, W])
        # merge repeated waypoints; keep at least one segment
        keep = [0] + [k for k in range(1, len(W)) if np.any(W[k] != W[k - 1])]
        if len(keep) == 1:
            keep.append(len(W) - 1)
        W = W[keep]
        object.__setattr__(self, "waypoints", W)
        object.__setattr__(self, "theta0", _as_theta(self.theta0))
        object.__setattr__(self, "thetaf", _as_theta(self.thetaf))
        if not self.tf > self.t0:
            raise ValueError(f"tf={self.tf} must exceed t0={self.t0}")

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    @property
    def d0(self) -> NDArray[np.float64]:
        return self.waypoints[0]

    @property
    def df(self) -> NDArray[np.float64]:
        return self.waypoints[-1]

    @property
    def mu(self) -> NDArray[np.float64]:
        return segment_fractions(self.waypoints)

    @property
    def cumulative(self) -> NDArray[np.float64]:
        c = np.concatenate([[0.0], np.cumsum(self.mu)])
        c[-1] = 1.0
        return c

    @property
    def segment_times(self) -> NDArray[np.float64]:
        return self.mu * (self.tf - self.t0)

    @property
    def knot_times(self) -> NDArray[np.float64]:
        k = self.t0 + self.cumulative * (self.tf - self.t0)
        k[-1] = self.tf
        return k

    @property
    def theta_bars(self) -> NDArray[np.float64]:
        """Per-waypoint features Θ̄_l = Θ̄_0 + (Σ_{k<l} μ_k)(Θ̄_f - Θ̄_0)."""
        c = self.cumulative
        out = self.theta0 + c[:, None] * (self.thetaf - self.theta0)
        out[0], out[-1] = self.theta0, self.thetaf
        return out

    def with_final_time(self, tf: float) -> "MotionPlan":
        return replace(self, tf=float(tf))

    def _locate(self, t: ArrayLike, left: bool = False):
        """Segment index, normalised time and duration for each t.

        At a waypoint time the following segment is used, or the preceding
        one with ``left=True`` (left limits of the discontinuous jerk and snap).
        """
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.tf))
        if np.any(t < self.t0 - tol) or np.any(t > self.tf + tol):
            raise PlanTimeError(f"time outside plan horizon [{self.t0}, {self.tf}]")
        knots = self.knot_times
        side = "left" if left else "right"
        seg = np.clip(np.searchsorted(knots, t, side=side) - 1, 0, self.n_segments - 1)
        T = self.segment_times[seg]
        s = np.clip((t - knots[seg]) / T, 0.0, 1.0)
        return seg, s, T

    def gamma_jet(self, t: ArrayLike, order: int = MAX_ORDER, left: bool = False):
        seg, s, T = self._locate(t, left)
        g = gamma_derivatives(s, T)[: order + 1]
        return seg, g

    def time_grid(self, dt: float, t0: float | None = None, tf: float | None = None) -> NDArray[np.float64]:
        """Nodes from t0 to tf that include every waypoint time, spaced at most ``dt``."""
        t0 = self.t0 if t0 is None else t0
        tf = self.tf if tf is None else tf
        inner = [k for k in self.knot_times[1:-1] if t0 < k < tf]
        breaks = [t0, *inner, tf]
        parts = [np.array([t0])]
        for a, b in zip(breaks[:-1], breaks[1:]):
            m = max(int(np.ceil((b - a) / dt - 1e-9)), 1)
            seg = a + (b - a) * np.arange(1, m + 1) / m
            seg[-1] = b
            parts.append(seg)
        return np.concatenate(parts)

    def displacement(self, t: ArrayLike, order: int = MAX_ORDER, left: bool = False) -> NDArray[np.float64]:
        """d(t) and derivatives, shape (order+1, *t.shape, 3)."""
        seg, g = self.gamma_jet(t, order, left)
        a, b = self.waypoints[seg], self.waypoints[seg + 1]
        out = g[..., None] * (b - a)
        out[0] = a + g[0][..., None] * (b - a)
        return out

    def theta(self, t: ArrayLike, order: int = MAX_ORDER, left: bool = False) -> NDArray[np.float64]:
        """Θ(t) and derivatives, shape (order+1, *t.shape, 9)."""
        seg, g = self.gamma_jet(t, order, left)
        tb = self.theta_bars
        a, b = tb[seg], tb[seg + 1]
        out = g[..., None] * (b - a)
        out[0] = a + g[0][..., None] * (b - a)
        return out

    def jacobian(self, t: ArrayLike, order: int = MAX_ORDER, left: bool = False) -> NDArray[np.float64]:
        """Q(t) = Φ(Θ(t)) and exact time derivatives, shape (order+1, *t.shape, 3, 3)."""
        seg, g = self.gamma_jet(t, order, left)
        tb = self.theta_bars
        delta = tb[seg + 1] - tb[seg]
        theta_t = tb[seg] + g[0][..., None] * delta
        fj = phi_gamma_jet(theta_t, delta, order)
        return faa_di_bruno(fj, g)

    def desired_positions(self, t: ArrayLike, r0: ArrayLike, order: int = MAX_ORDER,
                          left: bool = False) -> NDArray[np.float64]:
        """Global desired positions r_{i,a}(t) = Q(t)(r_{i,0} - d̄_0) + d(t) and derivatives.

        Shape (order+1, *t.shape, N, 3).
        """
        r0 = np.asarray(r0, dtype=float).reshape(-1, 3)
        Q = self.jacobian(t, order, left)
        d = self.displacement(t, order, left)
        rel = r0 - self.d0
        out = np.einsum("...jk,nk->...nj", Q, rel)
        out += d[..., None, :]
        return out

    def final_jacobian(self) -> NDArray[np.float64]:
        return build_jacobian(self.thetaf)


def _as_theta(theta) -> NDArray[np.float64]:
    if isinstance(theta, DeformationFeatures):
        return theta.as_array()
    arr = np.asarray(theta, dtype=float).reshape(9).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError("deformation features must be finite")
    return arr


def rigid_displacement(t, plan: MotionPlan, order: int = MAX_ORDER) -> NDArray[np.float64]:
    return plan.displacement(t, order)


def theta_trajectory(t, plan: MotionPlan, order: int = MAX_ORDER) -> NDArray[np.float64]:
    return plan.theta(t, order)
