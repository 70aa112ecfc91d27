"""Quadcopter model with thrust dynamics extended by two integrators, and the
feedback linearization that turns position into a chain of four integrators.

State layout (14 entries, also used for stacked (N, 14) arrays)::

    r (3) | v (3) | φ θ ψ (3) | ω body rates (3) | p thrust | ṗ

Input layout (4 entries): u_p = p̈, then body torques τ_φ, τ_θ, τ_ψ.

Every function accepts either a single state of shape (14,) or a stack
(N, 14) and broadcasts accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .affine_core import rotation_matrix

STATE_DIM = 14
R_, V_, E_, W_, P_, PD_ = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), 12, 13
E3 = np.array([0.0, 0.0, 1.0])


class VehicleSingularityError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadParams:
    mass: float = 1.0
    inertia: NDArray[np.float64] = field(default_factory=lambda: np.diag([0.01, 0.01, 0.02]))
    g: float = 9.81
    gyro_sign: float = -1.0  # ω̇ = J⁻¹(σ ω×Jω + τ); σ = -1 is the usual Euler equation
    p_floor_frac: float = 0.1
    theta_margin: float = 1e-3
    max_cond: float = 1e8
    u_p_limit: float | None = None
    torque_limit: float | None = None

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.ndim == 1:
            J = np.diag(J)
        object.__setattr__(self, "inertia", J)
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be symmetric positive definite")

    @property
    def J_inv(self) -> NDArray[np.float64]:
        return np.linalg.inv(self.inertia)

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.g


@dataclass
class QuadState:
    r: NDArray[np.float64]
    v: NDArray[np.float64]
    euler: NDArray[np.float64]
    omega: NDArray[np.float64]
    p: float
    p_dot: float = 0.0

    def as_array(self) -> NDArray[np.float64]:
        return np.concatenate([self.r, self.v, self.euler, self.omega, [self.p, self.p_dot]]).astype(float)

    @classmethod
    def from_array(cls, x: ArrayLike) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return cls(x[R_].copy(), x[V_].copy(), x[E_].copy(), x[W_].copy(), float(x[P_]), float(x[PD_]))

    @classmethod
    def hover(cls, r: ArrayLike, params: QuadParams, yaw: float = 0.0) -> "QuadState":
        return cls(np.asarray(r, float), np.zeros(3), np.array([0.0, 0.0, yaw]), np.zeros(3), params.hover_thrust)


@dataclass
class QuadInput:
    u_p: float
    torque: NDArray[np.float64]
    saturated: bool = False

    def as_array(self) -> NDArray[np.float64]:
        return np.concatenate([[self.u_p], self.torque])


@dataclass
class OuterCommand:
    s: NDArray[np.float64]
    u_psi: float

    def as_array(self) -> NDArray[np.float64]:
        return np.concatenate([self.s, [self.u_psi]])


def _state(x) -> NDArray[np.float64]:
    return x.as_array() if isinstance(x, QuadState) else np.asarray(x, dtype=float)


# --- kinematics --------------------------------------------------------------


def gamma_matrix(phi, theta, psi=0.0) -> NDArray[np.float64]:
    """Γ with ω_body = Γ (φ̇, θ̇, ψ̇). Does not depend on ψ."""
    phi, theta = np.broadcast_arrays(np.asarray(phi, float), np.asarray(theta, float))
    if np.any(np.abs(np.cos(theta)) < 1e-12):
        raise VehicleSingularityError("pitch at ±π/2: Γ is singular")
    cp, sp, ct, st = np.cos(phi), np.sin(phi), np.cos(theta), np.sin(theta)
    G = np.zeros(phi.shape + (3, 3))
    G[..., 0, 0] = 1.0
    G[..., 0, 2] = -st
    G[..., 1, 1] = cp
    G[..., 1, 2] = ct * sp
    G[..., 2, 1] = -sp
    G[..., 2, 2] = cp * ct
    return G


def gamma_inverse(phi, theta) -> NDArray[np.float64]:
    phi, theta = np.broadcast_arrays(np.asarray(phi, float), np.asarray(theta, float))
    cp, sp, ct, tt = np.cos(phi), np.sin(phi), np.cos(theta), np.tan(theta)
    G = np.zeros(phi.shape + (3, 3))
    G[..., 0, 0] = 1.0
    G[..., 0, 1] = sp * tt
    G[..., 0, 2] = cp * tt
    G[..., 1, 1] = cp
    G[..., 1, 2] = -sp
    G[..., 2, 1] = sp / ct
    G[..., 2, 2] = cp / ct
    return G


def gamma_dot(phi, theta, phid, thetad) -> NDArray[np.float64]:
    cp, sp, ct, st = np.cos(phi), np.sin(phi), np.cos(theta), np.sin(theta)
    G = np.zeros(np.shape(phi) + (3, 3))
    G[..., 0, 2] = -ct * thetad
    G[..., 1, 1] = -sp * phid
    G[..., 1, 2] = -st * sp * thetad + ct * cp * phid
    G[..., 2, 1] = -cp * phid
    G[..., 2, 2] = -sp * ct * phid - cp * st * thetad
    return G


def intermediate_axes(psi, theta):
    """k̂1 (= ê3), ĵ1 = ĵ2 after yaw, and k̂2 after yaw-pitch."""
    psi, theta = np.broadcast_arrays(np.asarray(psi, float), np.asarray(theta, float))
    z = np.zeros_like(psi)
    k1 = np.stack([z, z, z + 1.0], axis=-1)
    j1 = np.stack([-np.sin(psi), np.cos(psi), z], axis=-1)
    i1 = np.stack([np.cos(psi), np.sin(psi), z], axis=-1)
    k2 = np.sin(theta)[..., None] * i1 + np.cos(theta)[..., None] * k1
    return k1, j1, k2


def body_axes(x) -> NDArray[np.float64]:
    """Rows î_b, ĵ_b, k̂_b of the body frame in inertial coordinates."""
    x = _state(x)
    return rotation_matrix(x[..., 6], x[..., 7], x[..., 8])


def inertial_rate(x) -> NDArray[np.float64]:
    """Angular velocity in inertial coordinates, Rᵀ ω_body."""
    x = _state(x)
    R = body_axes(x)
    return np.einsum("...ji,...j->...i", R, x[..., W_])


def angular_velocity_from_axes(x) -> NDArray[np.float64]:
    """ψ̇ k̂1 + θ̇ ĵ2 + φ̇ î_b in inertial coordinates."""
    x = _state(x)
    ed = np.einsum("...ij,...j->...i", gamma_inverse(x[..., 6], x[..., 7]), x[..., W_])
    k1, j2, _ = intermediate_axes(x[..., 8], x[..., 7])
    ib = body_axes(x)[..., 0, :]
    return ed[..., 2:3] * k1 + ed[..., 1:2] * j2 + ed[..., 0:1] * ib


def _check(x, params: QuadParams) -> None:
    if np.any(np.abs(x[..., 7]) >= np.pi / 2 - params.theta_margin):
        raise VehicleSingularityError("pitch within the singularity margin of ±π/2")


# --- dynamics ----------------------------------------------------------------


def extended_derivative(x, u, params: QuadParams) -> NDArray[np.float64]:
    """ẋ of the extended model for state(s) ``x`` and input(s) ``u``."""
    x = _state(x)
    u = u.as_array() if isinstance(u, QuadInput) else np.asarray(u, dtype=float)
    _check(x, params)
    J, Ji = params.inertia, params.J_inv
    kb = body_axes(x)[..., 2, :]
    om = x[..., W_]
    dx = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (STATE_DIM,)))
    dx[..., R_] = x[..., V_]
    dx[..., V_] = (x[..., P_] / params.mass)[..., None] * kb - params.g * E3
    dx[..., E_] = np.einsum("...ij,...j->...i", gamma_inverse(x[..., 6], x[..., 7]), om)
    Jw = om @ J.T
    dx[..., W_] = (params.gyro_sign * np.cross(om, Jw) + u[..., 1:4]) @ Ji.T
    dx[..., P_] = x[..., PD_]
    dx[..., PD_] = u[..., 0]
    return dx


def chain_derivatives(x, params: QuadParams) -> NDArray[np.float64]:
    """(r, ṙ, r̈, r⃛) from the state, shape (..., 4, 3)."""
    x = _state(x)
    kb = body_axes(x)[..., 2, :]
    wI = inertial_rate(x)
    p, pd = x[..., P_, None], x[..., PD_, None]
    acc = p / params.mass * kb - params.g * E3
    jerk = (pd * kb + p * np.cross(wI, kb)) / params.mass
    return np.stack([x[..., R_], x[..., V_], acc, jerk], axis=-2)


@dataclass
class LinearizationTerms:
    O1: NDArray[np.float64]
    O2: NDArray[np.float64]
    O3: NDArray[np.float64]
    O4: NDArray[np.float64]
    B1: NDArray[np.float64]
    B2: NDArray[np.float64]
    M: NDArray[np.float64]
    N: NDArray[np.float64]


def linearization_terms(x, params: QuadParams, check: bool = True) -> LinearizationTerms:
    """Matrices of P̈ = O1 O3 ũ + O1 O4 + O2 and of the map v = M ũ + N.

    ũ = (u_p, τ) and v = (snap, ψ̈). The fourth row of M and N is the ψ̈
    row of the rotational dynamics.
    """
    x = _state(x)
    _check(x, params)
    m = params.mass
    p, pd = x[..., P_], x[..., PD_]
    if check and np.any(p <= params.p_floor_frac * params.hover_thrust):
        raise VehicleSingularityError("thrust at or below the floor; M is ill-conditioned")
    phi, theta, psi = x[..., 6], x[..., 7], x[..., 8]
    om = x[..., W_]
    R = body_axes(x)
    ib, jb, kb = R[..., 0, :], R[..., 1, :], R[..., 2, :]
    k1, j2, _ = intermediate_axes(psi, theta)
    wI = np.einsum("...ji,...j->...i", R, om)
    Gi = gamma_inverse(phi, theta)
    ed = np.einsum("...ij,...j->...i", Gi, om)
    phid, thetad, psid = ed[..., 0], ed[..., 1], ed[..., 2]

    pc = p[..., None]
    O1 = np.stack([kb, -pc * jb, pc * np.cross(j2, kb), pc * np.cross(k1, kb)], axis=-1)
    # extra terms of the inertial angular acceleration beyond the Euler accelerations
    B2t = (thetad * psid)[..., None] * np.cross(k1, j2) + phid[..., None] * np.cross(
        psid[..., None] * k1 + thetad[..., None] * j2, ib
    )
    O2 = pc * (np.cross(B2t, kb) + np.cross(wI, np.cross(wI, kb))) + 2.0 * pd[..., None] * np.cross(wI, kb)

    J = params.inertia
    G = gamma_matrix(phi, theta)
    B1 = J @ G
    Gd = gamma_dot(phi, theta, phid, thetad)
    Jw = om @ J.T
    B2 = np.einsum("ij,...j->...i", J, np.einsum("...ij,...j->...i", Gd, ed)) - params.gyro_sign * np.cross(om, Jw)
    B1i = Gi @ params.J_inv

    shape = x.shape[:-1]
    O3 = np.zeros(shape + (4, 4))
    O3[..., 0, 0] = 1.0
    O3[..., 1:, 1:] = B1i
    O4 = np.zeros(shape + (4,))
    O4[..., 1:] = -np.einsum("...ij,...j->...i", B1i, B2)

    M = np.zeros(shape + (4, 4))
    M[..., :3, :] = (O1 @ O3) / m
    M[..., 3, :] = O3[..., 3, :]
    N = np.zeros(shape + (4,))
    N[..., :3] = (np.einsum("...ij,...j->...i", O1, O4) + O2) / m
    N[..., 3] = O4[..., 3]
    if check:
        c = np.linalg.cond(M)
        if np.any(~np.isfinite(c)) or np.any(c > params.max_cond):
            raise VehicleSingularityError(f"M is near singular (cond = {np.max(c):.3e})")
    return LinearizationTerms(O1, O2, O3, O4, B1, B2, M, N)


def feedback_linearize(x, cmd, params: QuadParams, saturate: bool = True):
    """ũ = M⁻¹(v - N). Returns a :class:`QuadInput` for a single state, else an (N, 4) array."""
    single = isinstance(x, QuadState) or np.ndim(_state(x)) == 1
    v = cmd.as_array() if isinstance(cmd, OuterCommand) else np.asarray(cmd, dtype=float)
    T = linearization_terms(x, params)
    u = np.linalg.solve(T.M, (v - T.N)[..., None])[..., 0]
    sat = np.zeros(u.shape[:-1], dtype=bool)
    if saturate and params.u_p_limit is not None:
        over = np.abs(u[..., 0]) > params.u_p_limit
        sat |= over
        u[..., 0] = np.clip(u[..., 0], -params.u_p_limit, params.u_p_limit)
    if saturate and params.torque_limit is not None:
        over = np.any(np.abs(u[..., 1:]) > params.torque_limit, axis=-1)
        sat |= over
        u[..., 1:] = np.clip(u[..., 1:], -params.torque_limit, params.torque_limit)
    if single:
        return QuadInput(float(u[0]), u[1:].copy(), bool(sat))
    return u


# --- outer loop --------------------------------------------------------------


@dataclass(frozen=True)
class Gains:
    k1: float
    k2: float
    k3: float
    k4: float
    k_psi1: float = 4.0
    k_psi2: float = 4.0

    @property
    def position(self) -> NDArray[np.float64]:
        return np.array([self.k1, self.k2, self.k3, self.k4])

    @classmethod
    def from_pole(cls, a: float, k_psi1: float | None = None, k_psi2: float | None = None) -> "Gains":
        """Gains placing all four position poles at -a: (s + a)⁴."""
        return cls(4 * a, 6 * a**2, 4 * a**3, a**4,
                   2 * a if k_psi1 is None else k_psi1, a**2 if k_psi2 is None else k_psi2)


def snap_command(chain, ref, k: ArrayLike) -> NDArray[np.float64]:
    """s = k1(r⃛_d - r⃛) + k2(r̈_d - r̈) + k3(ṙ_d - ṙ) + k4(r_d - r).

    ``chain`` and ``ref`` are (..., 4, 3) stacks of (r, ṙ, r̈, r⃛); ``k``
    broadcasts as (..., 4). With a stationary reference this is the plain
    law s = -k1 r⃛ - k2 r̈ - k3 ṙ + k4(r_d - r).
    """
    k = np.asarray(k, dtype=float)
    err = np.asarray(ref, dtype=float) - np.asarray(chain, dtype=float)
    return (k[..., 3:4] * err[..., 0, :] + k[..., 2:3] * err[..., 1, :]
            + k[..., 1:2] * err[..., 2, :] + k[..., 0:1] * err[..., 3, :])


def outer_loop(x, r_d, gains: Gains, params: QuadParams, ref_derivs=None):
    """Outer-loop command (s, u_ψ).

    ``r_d`` is the desired position; ``ref_derivs`` optionally supplies its
    first three derivatives as a (..., 3, 3) stack.
    """
    x = _state(x)
    chain = chain_derivatives(x, params)
    ref = np.zeros_like(chain)
    ref[..., 0, :] = r_d
    if ref_derivs is not None:
        ref[..., 1:, :] = ref_derivs
    s = snap_command(chain, ref, gains.position)
    psi = x[..., 8]
    psid = np.einsum("...ij,...j->...i", gamma_inverse(x[..., 6], x[..., 7]), x[..., W_])[..., 2]
    u_psi = -gains.k_psi1 * psid - gains.k_psi2 * psi
    if x.ndim == 1:
        return OuterCommand(s, float(u_psi))
    return np.concatenate([s, u_psi[..., None]], axis=-1)
