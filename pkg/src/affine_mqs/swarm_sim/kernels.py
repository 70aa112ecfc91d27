"""Compiled per-agent closed-loop right-hand side.

Same mathematics as :mod:`affine_mqs.vehicle`, written as scalar loops so
that one RK4 stage for a whole swarm costs microseconds. Every agent is
computed independently with a fixed operation order, so splitting agents
across threads cannot change a single bit of the result.

Instead of forming M⁻¹ the kernel solves for Ξ = (p̈, φ̈, θ̈, ψ̈) from
(1/m)(O1 Ξ + O2) = s and ψ̈ = u_ψ, then maps the Euler accelerations to
torques with τ = B1 (φ̈, θ̈, ψ̈) + B2. This is the same input as
M⁻¹(v - N) because M = [(1/m)O1; e4ᵀ] O3 and N = [(1/m)(O1 O4 + O2); O4[3]].
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=True, nogil=True)
def _axes(phi, theta, psi):
    cx, sx = np.cos(phi), np.sin(phi)
    cy, sy = np.cos(theta), np.sin(theta)
    cz, sz = np.cos(psi), np.sin(psi)
    R = np.empty((3, 3))
    R[0, 0] = cy * cz
    R[0, 1] = cy * sz
    R[0, 2] = -sy
    R[1, 0] = sx * sy * cz - cx * sz
    R[1, 1] = sx * sy * sz + cx * cz
    R[1, 2] = sx * cy
    R[2, 0] = cx * sy * cz + sx * sz
    R[2, 1] = cx * sy * sz - sx * cz
    R[2, 2] = cx * cy
    return R


@njit(cache=True, nogil=True)
def chain_kernel(X, mass, g, out):
    """(r, ṙ, r̈, r⃛) for every agent into out (N, 4, 3)."""
    for i in range(X.shape[0]):
        R = _axes(X[i, 6], X[i, 7], X[i, 8])
        w0 = R[0, 0] * X[i, 9] + R[1, 0] * X[i, 10] + R[2, 0] * X[i, 11]
        w1 = R[0, 1] * X[i, 9] + R[1, 1] * X[i, 10] + R[2, 1] * X[i, 11]
        w2 = R[0, 2] * X[i, 9] + R[1, 2] * X[i, 10] + R[2, 2] * X[i, 11]
        c0, c1, c2 = _cross(w0, w1, w2, R[2, 0], R[2, 1], R[2, 2])
        p, pd = X[i, 12], X[i, 13]
        for a in range(3):
            out[i, 0, a] = X[i, a]
            out[i, 1, a] = X[i, 3 + a]
        out[i, 2, 0] = p / mass * R[2, 0]
        out[i, 2, 1] = p / mass * R[2, 1]
        out[i, 2, 2] = p / mass * R[2, 2] - g
        out[i, 3, 0] = (pd * R[2, 0] + p * c0) / mass
        out[i, 3, 1] = (pd * R[2, 1] + p * c1) / mass
        out[i, 3, 2] = (pd * R[2, 2] + p * c2) / mass


@njit(cache=True, nogil=True)
def _solve4(A, b):
    """Gaussian elimination with partial pivoting on a 4x4 copy."""
    M = A.copy()
    x = b.copy()
    for c in range(4):
        piv = c
        for r in range(c + 1, 4):
            if abs(M[r, c]) > abs(M[piv, c]):
                piv = r
        if piv != c:
            for k in range(4):
                M[c, k], M[piv, k] = M[piv, k], M[c, k]
            x[c], x[piv] = x[piv], x[c]
        for r in range(c + 1, 4):
            f = M[r, c] / M[c, c]
            for k in range(c, 4):
                M[r, k] -= f * M[c, k]
            x[r] -= f * x[c]
    for c in range(3, -1, -1):
        acc = x[c]
        for k in range(c + 1, 4):
            acc -= M[c, k] * x[k]
        x[c] = acc / M[c, c]
    return x


@njit(cache=True, nogil=True)
def rhs_kernel(X, ref, k, kpsi1, kpsi2, mass, g, J, Ji, sigma, p_floor,
               up_lim, tau_lim, lo, hi, out):
    """State derivative of agents lo..hi-1 under the full control stack.

    ``ref`` (N, 4, 3) holds each agent's reference (r_d, ṙ_d, r̈_d, r⃛_d).
    Returns 1 if any agent in the range is singular (thrust floor or pitch),
    else 0.
    """
    bad = 0
    Xi = np.empty(4)
    v = np.empty(4)
    Mm = np.empty((4, 4))
    for i in range(lo, hi):
        phi, theta, psi = X[i, 6], X[i, 7], X[i, 8]
        om0, om1, om2 = X[i, 9], X[i, 10], X[i, 11]
        p, pd = X[i, 12], X[i, 13]
        if p <= p_floor or abs(theta) >= np.pi / 2 - 1e-3:
            bad = 1
        R = _axes(phi, theta, psi)
        cp, sp = np.cos(phi), np.sin(phi)
        ct, st = np.cos(theta), np.sin(theta)
        tt = st / ct
        # Euler rates
        phid = om0 + sp * tt * om1 + cp * tt * om2
        thetad = cp * om1 - sp * om2
        psid = (sp * om1 + cp * om2) / ct
        # inertial angular velocity
        w0 = R[0, 0] * om0 + R[1, 0] * om1 + R[2, 0] * om2
        w1 = R[0, 1] * om0 + R[1, 1] * om1 + R[2, 1] * om2
        w2 = R[0, 2] * om0 + R[1, 2] * om1 + R[2, 2] * om2
        kb0, kb1, kb2 = R[2, 0], R[2, 1], R[2, 2]
        # chain (acc, jerk)
        wk0, wk1, wk2 = _cross(w0, w1, w2, kb0, kb1, kb2)
        acc0 = p / mass * kb0
        acc1 = p / mass * kb1
        acc2 = p / mass * kb2 - g
        jk0 = (pd * kb0 + p * wk0) / mass
        jk1 = (pd * kb1 + p * wk1) / mass
        jk2 = (pd * kb2 + p * wk2) / mass
        # snap command
        s0 = (k[3] * (ref[i, 0, 0] - X[i, 0]) + k[2] * (ref[i, 1, 0] - X[i, 3])
              + k[1] * (ref[i, 2, 0] - acc0) + k[0] * (ref[i, 3, 0] - jk0))
        s1 = (k[3] * (ref[i, 0, 1] - X[i, 1]) + k[2] * (ref[i, 1, 1] - X[i, 4])
              + k[1] * (ref[i, 2, 1] - acc1) + k[0] * (ref[i, 3, 1] - jk1))
        s2 = (k[3] * (ref[i, 0, 2] - X[i, 2]) + k[2] * (ref[i, 1, 2] - X[i, 5])
              + k[1] * (ref[i, 2, 2] - acc2) + k[0] * (ref[i, 3, 2] - jk2))
        u_psi = -kpsi1 * psid - kpsi2 * psi
        # intermediate axes k1 = e3, j2 = (-sψ, cψ, 0)
        j20, j21 = -np.sin(psi), np.cos(psi)
        # O1 columns: k_b, -p j_b, p (j2 x k_b), p (k1 x k_b)
        a0, a1, a2 = _cross(j20, j21, 0.0, kb0, kb1, kb2)
        b0, b1, b2 = _cross(0.0, 0.0, 1.0, kb0, kb1, kb2)
        Mm[0, 0], Mm[1, 0], Mm[2, 0] = kb0 / mass, kb1 / mass, kb2 / mass
        Mm[0, 1], Mm[1, 1], Mm[2, 1] = -p * R[1, 0] / mass, -p * R[1, 1] / mass, -p * R[1, 2] / mass
        Mm[0, 2], Mm[1, 2], Mm[2, 2] = p * a0 / mass, p * a1 / mass, p * a2 / mass
        Mm[0, 3], Mm[1, 3], Mm[2, 3] = p * b0 / mass, p * b1 / mass, p * b2 / mass
        Mm[3, 0] = 0.0
        Mm[3, 1] = 0.0
        Mm[3, 2] = 0.0
        Mm[3, 3] = 1.0
        # extra inertial angular acceleration terms
        kj0, kj1, kj2 = _cross(0.0, 0.0, 1.0, j20, j21, 0.0)
        q0, q1, q2 = thetad * j20, thetad * j21, psid
        e0, e1, e2 = _cross(q0, q1, q2, R[0, 0], R[0, 1], R[0, 2])
        t0 = thetad * psid * kj0 + phid * e0
        t1 = thetad * psid * kj1 + phid * e1
        t2 = thetad * psid * kj2 + phid * e2
        x0, x1, x2 = _cross(t0, t1, t2, kb0, kb1, kb2)
        y0, y1, y2 = _cross(w0, w1, w2, wk0, wk1, wk2)
        o0 = p * (x0 + y0) + 2.0 * pd * wk0
        o1 = p * (x1 + y1) + 2.0 * pd * wk1
        o2 = p * (x2 + y2) + 2.0 * pd * wk2
        v[0] = s0 - o0 / mass
        v[1] = s1 - o1 / mass
        v[2] = s2 - o2 / mass
        v[3] = u_psi
        Xi[:] = _solve4(Mm, v)
        # τ = J (Γ ë + Γ̇ ė) - σ ω × Jω
        ga0 = Xi[1] - st * Xi[3]
        ga1 = cp * Xi[2] + ct * sp * Xi[3]
        ga2 = -sp * Xi[2] + cp * ct * Xi[3]
        gd0 = -ct * thetad * psid
        gd1 = -sp * phid * thetad + (-st * sp * thetad + ct * cp * phid) * psid
        gd2 = -cp * phid * thetad + (-sp * ct * phid - cp * st * thetad) * psid
        al0, al1, al2 = ga0 + gd0, ga1 + gd1, ga2 + gd2
        Jw0 = J[0, 0] * om0 + J[0, 1] * om1 + J[0, 2] * om2
        Jw1 = J[1, 0] * om0 + J[1, 1] * om1 + J[1, 2] * om2
        Jw2 = J[2, 0] * om0 + J[2, 1] * om1 + J[2, 2] * om2
        gy0, gy1, gy2 = _cross(om0, om1, om2, Jw0, Jw1, Jw2)
        tau0 = J[0, 0] * al0 + J[0, 1] * al1 + J[0, 2] * al2 - sigma * gy0
        tau1 = J[1, 0] * al0 + J[1, 1] * al1 + J[1, 2] * al2 - sigma * gy1
        tau2 = J[2, 0] * al0 + J[2, 1] * al1 + J[2, 2] * al2 - sigma * gy2
        up = Xi[0]
        up = min(max(up, -up_lim), up_lim)
        tau0 = min(max(tau0, -tau_lim), tau_lim)
        tau1 = min(max(tau1, -tau_lim), tau_lim)
        tau2 = min(max(tau2, -tau_lim), tau_lim)
        # extended dynamics
        for a in range(3):
            out[i, a] = X[i, 3 + a]
        out[i, 3] = acc0
        out[i, 4] = acc1
        out[i, 5] = acc2
        out[i, 6] = phid
        out[i, 7] = thetad
        out[i, 8] = psid
        r0 = sigma * gy0 + tau0
        r1 = sigma * gy1 + tau1
        r2 = sigma * gy2 + tau2
        out[i, 9] = Ji[0, 0] * r0 + Ji[0, 1] * r1 + Ji[0, 2] * r2
        out[i, 10] = Ji[1, 0] * r0 + Ji[1, 1] * r1 + Ji[1, 2] * r2
        out[i, 11] = Ji[2, 0] * r0 + Ji[2, 1] * r1 + Ji[2, 2] * r2
        out[i, 12] = pd
        out[i, 13] = up
    return bad
