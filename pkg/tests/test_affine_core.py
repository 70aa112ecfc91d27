import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affine_mqs.affine_core import (
    DegenerateSimplexError,
    HyperplaneError,
    build_jacobian,
    containment_fn,
    deformation_eigvecs,
    deformation_matrix,
    global_desired_position,
    leader_coefficients,
    rank_fn,
    recover_eigenvalues,
    rotation_matrix,
)

angle = st.floats(-np.pi, np.pi, allow_nan=False)


def test_rotation_identity_and_quarter_turn():
    assert np.allclose(rotation_matrix(0, 0, 0), np.eye(3))
    assert np.allclose(rotation_matrix(0, 0, np.pi / 2), [[0, 1, 0], [-1, 0, 0], [0, 0, 1]], atol=1e-15)


@given(angle, angle, angle)
def test_rotation_factorizes(x, y, z):
    R = rotation_matrix(x, 0, 0) @ rotation_matrix(0, y, 0) @ rotation_matrix(0, 0, z)
    assert np.max(np.abs(R - rotation_matrix(x, y, z))) < 1e-12


@given(angle, angle, angle)
def test_eigvecs_orthonormal(b4, b5, b6):
    U = np.array(deformation_eigvecs(b4, b5, b6))
    assert np.max(np.abs(U @ U.T - np.eye(3))) < 1e-12


@given(angle, angle)
def test_first_eigvec_closed_form(b5, b6):
    u1 = deformation_eigvecs(0.0, b5, b6)[0]
    ref = [np.cos(b5) * np.cos(b6), np.cos(b5) * np.sin(b6), -np.sin(b5)]
    assert np.allclose(u1, ref, atol=1e-14)


def test_undeformed_is_identity():
    assert np.allclose(build_jacobian([1, 1, 1, 0, 0, 0, 0, 0, 0]), np.eye(3))


@given(st.floats(-3, 3), angle, angle, angle)
def test_equal_eigenvalues_give_scaled_identity(lam, b4, b5, b6):
    U = deformation_matrix([lam, lam, lam, 0, 0, 0, b4, b5, b6])
    assert np.max(np.abs(U - lam * np.eye(3))) < 1e-12


def test_eigenvalues_recovered_by_symmetric_solver(rng):
    for _ in range(200):
        lam = np.sort(rng.uniform(0.2, 3.0, 3))
        th = np.concatenate([rng.permutation(lam), rng.uniform(-np.pi, np.pi, 6)])
        assert np.allclose(np.sort(np.linalg.eigvalsh(deformation_matrix(th))), lam, atol=1e-9)
        assert np.allclose(recover_eigenvalues(th), th[:3], atol=1e-9)


def test_jacobian_is_rotation_times_symmetric(rng):
    th = np.concatenate([rng.uniform(0.5, 2, 3), rng.uniform(-3, 3, 6)])
    Rr = rotation_matrix(*th[3:6])
    S = Rr.T @ build_jacobian(th)
    assert np.allclose(S, S.T, atol=1e-12)


def test_rank_function():
    assert rank_fn(np.array([[0, 0, 0], [1, 1, 0], [2, 2, 0]], float), 2) == 1
    assert rank_fn(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), 2) == 2
    tet = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    assert rank_fn(tet, 3) == 3


def test_containment_basic():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    assert abs(containment_fn(tri, tri.mean(0), 2)) == 3
    assert abs(containment_fn(tri, [5.0, 5.0, 0.0], 2)) < 3
    assert abs(containment_fn(tri, tri[1], 2)) <= 2


def test_containment_matches_barycentric(rng):
    for _ in range(1000):
        tri = np.column_stack([rng.uniform(-5, 5, (3, 2)), np.zeros(3)])
        c = np.array([*rng.uniform(-6, 6, 2), 0.0])
        A = np.vstack([tri[:, :2].T, np.ones(3)])
        if abs(np.linalg.det(A)) < 1e-3:
            continue
        w = np.linalg.solve(A, [c[0], c[1], 1.0])
        if np.min(np.abs(w)) < 1e-6:
            continue
        assert (abs(containment_fn(tri, c, 2)) == 3) == bool(np.all(w > 0))


def test_containment_degenerate_raises():
    with pytest.raises(DegenerateSimplexError):
        containment_fn(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float), [0.5, 0, 0], 2)


def test_leader_coefficients_rows():
    L = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]], float)
    P = np.vstack([L, L.mean(0)])
    H = leader_coefficients(P, L, 2)
    assert np.allclose(H[:3], np.eye(3))
    assert np.allclose(H[3], [1 / 3, 1 / 3, 1 / 3])


def test_leader_coefficients_reconstruct(rng):
    from conftest import random_planar_formation
    P = random_planar_formation(rng, 12)
    H = leader_coefficients(P, P[:3], 2)
    assert np.max(np.abs(H @ P[:3] - P)) < 1e-9
    assert np.allclose(H.sum(axis=1), 1.0)


def test_off_hyperplane_agent_rejected():
    L = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]], float)
    with pytest.raises(HyperplaneError):
        leader_coefficients(np.vstack([L, [1, 1, 0.5]]), L, 2)


def test_global_desired_position():
    d0 = np.array([1.0, 2.0, 3.0])
    r = np.array([4.0, -1.0, 0.5])
    assert np.allclose(global_desired_position(np.eye(3), d0, d0, r), r)
    assert np.allclose(global_desired_position(np.diag([2, 3, 4.0]), [7, 7, 7], d0, d0), [7, 7, 7])
    assert np.allclose(global_desired_position(2 * np.eye(3), [1, 0, 0], [0, 0, 0], [1, 1, 0]), [3, 2, 0])


@settings(max_examples=50)
@given(st.lists(st.floats(0.2, 3.0), min_size=3, max_size=3),
       st.lists(angle, min_size=6, max_size=6))
def test_affine_map_preserves_barycentric_weights(lam, betas):
    """Followers stay at the same leader coefficients under any affine map."""
    L = np.array([[0, 0, 0], [4, 0, 0], [1, 3, 0]], float)
    w = np.array([0.2, 0.5, 0.3])
    Q = build_jacobian(np.concatenate([lam, betas]))
    mapped = global_desired_position(Q, [1, 2, 3], [0, 0, 0], np.vstack([L, w @ L]))
    assert np.allclose(w @ mapped[:3], mapped[3], atol=1e-9)
