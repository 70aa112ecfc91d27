"""Linear-algebra kernel: 3-2-1 rotations, the deformation decomposition of
the Jacobian, simplex rank/containment tests and leader coefficients.

Every function is pure. Angle arguments broadcast, so ``rotation_matrix``
accepts scalars or arrays of any (common) shape and returns ``(..., 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

RANK_RTOL = 1e-9
BARY_ZERO = 1e-12

# Θ layout: three stretch eigenvalues followed by six angles.
LAMBDA = slice(0, 3)
BETA = slice(3, 9)


class DegenerateSimplexError(ValueError):
    """Raised when n+1 points fail the rank condition for an n-simplex."""


class HyperplaneError(ValueError):
    """Raised when an agent does not lie in the leaders' n-D hyperplane."""


@dataclass(frozen=True)
class DeformationFeatures:
    """Deformation feature vector (λ1, λ2, λ3, β1..β6).

    λ are the stretch eigenvalues of the symmetric factor, β1..β3 the rigid
    rotation angles and β4..β6 the eigenvector orientation angles.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    beta4: float = 0.0
    beta5: float = 0.0
    beta6: float = 0.0

    @classmethod
    def from_array(cls, values: ArrayLike) -> "DeformationFeatures":
        arr = np.asarray(values, dtype=float).reshape(9)
        if not np.all(np.isfinite(arr)):
            raise ValueError("deformation features must be finite")
        return cls(*map(float, arr))

    def as_array(self) -> NDArray[np.float64]:
        return np.array(
            [self.lambda1, self.lambda2, self.lambda3, self.beta1, self.beta2,
             self.beta3, self.beta4, self.beta5, self.beta6]
        )

    @property
    def lambdas(self) -> NDArray[np.float64]:
        return self.as_array()[LAMBDA]


def rotation_matrix(X: ArrayLike, Y: ArrayLike, Z: ArrayLike) -> NDArray[np.float64]:
    """3-2-1 Euler rotation R(X, Y, Z) = R(X,0,0) R(0,Y,0) R(0,0,Z).

    Rows of the result are the rotated frame's axes expressed in the
    original frame.
    """
    X, Y, Z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (X, Y, Z)))
    cx, sx = np.cos(X), np.sin(X)
    cy, sy = np.cos(Y), np.sin(Y)
    cz, sz = np.cos(Z), np.sin(Z)
    R = np.empty(X.shape + (3, 3))
    R[..., 0, 0] = cy * cz
    R[..., 0, 1] = cy * sz
    R[..., 0, 2] = -sy
    R[..., 1, 0] = sx * sy * cz - cx * sz
    R[..., 1, 1] = sx * sy * sz + cx * cz
    R[..., 1, 2] = sx * cy
    R[..., 2, 0] = cx * sy * cz + sx * sz
    R[..., 2, 1] = cx * sy * sz - sx * cz
    R[..., 2, 2] = cx * cy
    return R


def deformation_eigvecs(beta4: float, beta5: float, beta6: float):
    """Eigenvectors û_i = Rᵀ(β4, β5, β6) ê_i of the deformation matrix."""
    R = rotation_matrix(beta4, beta5, beta6)
    return R[0].copy(), R[1].copy(), R[2].copy()


def deformation_matrix(theta: DeformationFeatures | ArrayLike) -> NDArray[np.float64]:
    """Symmetric factor U_D = Σ λ_i û_i û_iᵀ = Rᵀ Λ R with R = R(β4, β5, β6).

    The eigenvectors û_i are the rows of R, the same vectors the shear-axis
    search and the separation bound are written in.
    """
    th = _theta_array(theta)
    R = rotation_matrix(th[6], th[7], th[8])
    return R.T @ np.diag(th[LAMBDA]) @ R


def build_jacobian(theta: DeformationFeatures | ArrayLike) -> NDArray[np.float64]:
    """Q = Φ(Θ) = R_r(β1,β2,β3) · U_D."""
    th = _theta_array(theta)
    Rr = rotation_matrix(th[3], th[4], th[5])
    return Rr @ deformation_matrix(th)


def recover_eigenvalues(theta: DeformationFeatures | ArrayLike) -> NDArray[np.float64]:
    """Eigenvalues of U_D ordered by matching eigenvectors to û1, û2, û3.

    Uses a symmetric eigensolver on the assembled U_D and pairs each
    returned eigenvector with the planned û_i of largest |alignment|.
    """
    th = _theta_array(theta)
    U = deformation_matrix(th)
    w, V = np.linalg.eigh(U)
    u = rotation_matrix(th[6], th[7], th[8])
    align = np.abs(u @ V)
    order = np.argmax(align, axis=1)
    return w[order]


def _theta_array(theta) -> NDArray[np.float64]:
    if isinstance(theta, DeformationFeatures):
        return theta.as_array()
    return np.asarray(theta, dtype=float).reshape(9)


# --- simplices -------------------------------------------------------------


def edge_matrix(points: ArrayLike) -> NDArray[np.float64]:
    """Columns p_k - p_1 for k = 2..n+1, shape (3, n)."""
    P = np.asarray(points, dtype=float)
    return (P[1:] - P[0]).T


def rank_fn(points: ArrayLike, n: int) -> int:
    """Tolerance rank of the edge matrix of n+1 points."""
    P = np.asarray(points, dtype=float)
    if n not in (1, 2, 3) or P.shape != (n + 1, 3):
        raise ValueError(f"expected {n + 1} points in R^3 for n={n}, got shape {P.shape}")
    sv = np.linalg.svd(edge_matrix(P), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def affine_frame(points: ArrayLike, n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Origin and orthonormal basis (3, n) of the affine hull of the first n+1 points.

    The basis comes from a QR (Gram-Schmidt) factorisation of the edge
    vectors; its orientation is fixed by that factorisation.
    """
    P = np.asarray(points, dtype=float)
    E = edge_matrix(P[: n + 1])
    Qm, Rm = np.linalg.qr(E)
    # Keep the basis orientation tied to the edge order.
    signs = np.sign(np.diag(Rm))
    signs[signs == 0] = 1.0
    return P[0].copy(), Qm * signs


def frame_coordinates(points: ArrayLike, origin: ArrayLike, basis: ArrayLike) -> NDArray[np.float64]:
    return (np.asarray(points, dtype=float) - origin) @ np.asarray(basis)


def containment_dets(points: ArrayLike, c: ArrayLike, n: int) -> NDArray[np.float64]:
    """Determinants |D_i| with column i of the homogeneous vertex matrix replaced by c.

    For n = 3 the 4x4 determinants are taken in world coordinates. For
    n < 3 all points are first expressed in an orthonormal frame of the
    simplex's affine hull, giving (n+1)x(n+1) determinants.
    """
    P = np.asarray(points, dtype=float)
    c = np.asarray(c, dtype=float)
    if rank_fn(P, n) != n:
        raise DegenerateSimplexError(f"points do not span a {n}-simplex")
    if n == 3:
        coords, cc = P, c
    else:
        origin, basis = affine_frame(P, n)
        coords = frame_coordinates(P, origin, basis)
        cc = frame_coordinates(c, origin, basis)
    D = np.ones((n + 2, n + 1, n + 1))
    D[:, :n, :] = coords.T
    for i in range(n + 1):
        D[i + 1, :n, i] = cc
    return np.linalg.det(D)


def containment_fn(points: ArrayLike, c: ArrayLike, n: int) -> int:
    """ϰ_n = Σ sign(det D_i); |ϰ_n| = n+1 iff c is strictly inside the simplex.

    Determinants with |det D_i| below 1e-12 of the simplex determinant count
    as zero (c on a facet or vertex).
    """
    dets = containment_dets(points, c, n)
    ref, sub = dets[0], dets[1:]
    s = np.sign(sub)
    s[np.abs(sub) <= BARY_ZERO * abs(ref)] = 0.0
    return int(s.sum())


def batch_barycentric(coords: NDArray[np.float64], simplices: NDArray[np.int_], c: NDArray[np.float64]) -> NDArray[np.float64]:
    """Barycentric coordinates of c in many simplices at once.

    ``coords`` are frame coordinates (M_pts, n), ``simplices`` index rows
    (K, n+1). Returns (K, n+1); rows of degenerate simplices are NaN.
    """
    V = coords[simplices]  # (K, n+1, n)
    K, m, n = V.shape
    D = np.ones((K, n + 1, m))
    D[:, :n, :] = np.swapaxes(V, 1, 2)
    ref = np.linalg.det(D)
    out = np.empty((K, m))
    for i in range(m):
        Di = D.copy()
        Di[:, :n, i] = c
        out[:, i] = np.linalg.det(Di)
    scale = np.max(np.abs(V - V[:, :1]), axis=(1, 2)) ** n
    bad = np.abs(ref) <= RANK_RTOL * np.maximum(scale, np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        bary = out / ref[:, None]
    bary[bad] = np.nan
    return bary


def leader_coefficients(
    formation_positions: ArrayLike,
    leader_positions: ArrayLike,
    n: int,
    scale: float | None = None,
) -> NDArray[np.float64]:
    """Leader coefficient matrix H (N, n+1) with r_i0 = Σ_j H[i, j] r_j0.

    Agents farther than ``1e-6 * scale`` from the leaders' hyperplane raise
    :class:`HyperplaneError`. ``scale`` defaults to the largest distance of
    an agent from the leaders' centroid.
    """
    R = np.asarray(formation_positions, dtype=float).reshape(-1, 3)
    PL = np.asarray(leader_positions, dtype=float).reshape(n + 1, 3)
    if rank_fn(PL, n) != n:
        raise DegenerateSimplexError(f"leaders violate the rank condition for n={n}")
    origin, basis = affine_frame(PL, n)
    if scale is None:
        scale = float(np.max(np.linalg.norm(R - PL.mean(axis=0), axis=1), initial=0.0))
        scale = max(scale, float(np.max(np.linalg.norm(PL - PL.mean(axis=0), axis=1))))
    rel = R - origin
    inplane = rel @ basis
    resid = np.linalg.norm(rel - inplane @ basis.T, axis=1)
    off = np.flatnonzero(resid > 1e-6 * scale)
    if off.size:
        i = int(off[0])
        raise HyperplaneError(f"agent {i} is {resid[i]:.3e} m off the leaders' {n}-D hyperplane")
    E = basis.T @ edge_matrix(PL)  # (n, n)
    A = np.linalg.solve(E, inplane.T).T  # (N, n)
    H = np.empty((R.shape[0], n + 1))
    H[:, 1:] = A
    H[:, 0] = 1.0 - A.sum(axis=1)
    return H


def global_desired_position(Q: ArrayLike, d: ArrayLike, d0: ArrayLike, r_i0: ArrayLike) -> NDArray[np.float64]:
    """r_{i,a} = Q (r_{i,0} - d0) + d; ``r_i0`` may be stacked as (N, 3)."""
    Q = np.asarray(Q, dtype=float)
    r = np.asarray(r_i0, dtype=float)
    return (r - np.asarray(d0, dtype=float)) @ Q.T + np.asarray(d, dtype=float)


def point_dimension(points: ArrayLike, rtol: float = RANK_RTOL) -> int:
    """Dimension of the affine hull of a point cloud."""
    P = np.asarray(points, dtype=float)
    if len(P) < 2:
        return 0
    sv = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def simplex_vertices(points: ArrayLike, ids: Sequence[int]) -> NDArray[np.float64]:
    return np.asarray(points, dtype=float)[list(ids)]
