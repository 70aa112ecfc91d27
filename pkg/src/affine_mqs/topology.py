"""Proximity-based communication topology for leader-follower swarms.

Leaders move independently, non-leader boundary agents listen to all
leaders and every interior agent listens to the n+1 vertices of the
smallest-radius simplex around it. Weights are barycentric coordinates of
the follower's initial position, so the weight matrix reproduces the
initial formation exactly.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import ConvexHull

from .affine_core import (
    DegenerateSimplexError,
    affine_frame,
    batch_barycentric,
    containment_fn,
    frame_coordinates,
    leader_coefficients,
    point_dimension,
    rank_fn,
)

HULL_TOL = 1e-9


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Formation:
    """Initial formation with agent roles. Agent ids are 0-based row indices."""

    n: int
    positions: NDArray[np.float64]
    leader_ids: tuple[int, ...]
    boundary_ids: tuple[int, ...]
    interior_ids: tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def follower_ids(self) -> tuple[int, ...]:
        leaders = set(self.leader_ids)
        return tuple(i for i in range(self.N) if i not in leaders)

    @property
    def leader_positions(self) -> NDArray[np.float64]:
        return self.positions[list(self.leader_ids)]

    def frame(self):
        return affine_frame(self.leader_positions, self.n)

    def frame_coords(self) -> NDArray[np.float64]:
        origin, basis = self.frame()
        return frame_coordinates(self.positions, origin, basis)

    @classmethod
    def build(cls, positions: ArrayLike, leader_ids, n: int | None = None,
              boundary_ids=None, interior_ids=None) -> "Formation":
        """Validate a formation; roles are computed from the hull unless given."""
        P = np.asarray(positions, dtype=float).reshape(-1, 3)
        if n is None:
            n = point_dimension(P)
        if n not in (1, 2, 3):
            raise TopologyError(f"formation dimension must be 1, 2 or 3, got {n}")
        leader_ids = tuple(int(i) for i in leader_ids)
        if len(leader_ids) != n + 1 or len(set(leader_ids)) != n + 1:
            raise TopologyError(f"need {n + 1} distinct leaders for an {n}-D formation")
        if rank_fn(P[list(leader_ids)], n) != n:
            raise DegenerateSimplexError("leaders violate the rank condition rank[r_k - r_1] = n")
        # raises HyperplaneError for agents off the leaders' hyperplane
        leader_coefficients(P, P[list(leader_ids)], n)
        if boundary_ids is None:
            boundary_ids, interior_ids = classify_roles(P, n, leader_ids)
        else:
            boundary_ids = tuple(int(i) for i in boundary_ids)
            if interior_ids is None:
                interior_ids = tuple(i for i in range(len(P)) if i not in set(boundary_ids))
            interior_ids = tuple(int(i) for i in interior_ids)
            _check_partition(len(P), n, leader_ids, boundary_ids, interior_ids)
        return cls(n, P, leader_ids, tuple(boundary_ids), tuple(interior_ids))


def _check_partition(N, n, leader_ids, boundary_ids, interior_ids):
    b, it = set(boundary_ids), set(interior_ids)
    if b & it:
        raise TopologyError(f"agents {sorted(b & it)} are both boundary and interior")
    if b | it != set(range(N)):
        raise TopologyError(f"agents {sorted(set(range(N)) - (b | it))} have no role")
    if not set(leader_ids) <= b:
        raise TopologyError(f"leaders {sorted(set(leader_ids) - b)} are not boundary agents")
    if len(b) < n + 1:
        raise TopologyError(f"need at least {n + 1} boundary agents, got {len(b)}")


def classify_roles(positions: ArrayLike, n: int, leader_ids) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split agents into hull (boundary) and interior sets within the hyperplane."""
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    leader_ids = tuple(int(i) for i in leader_ids)
    origin, basis = affine_frame(P[list(leader_ids)], n)
    X = frame_coordinates(P, origin, basis)
    scale = float(np.max(np.ptp(X, axis=0)))
    if n == 1:
        x = X[:, 0]
        tol = HULL_TOL * scale
        boundary = np.flatnonzero((x <= x.min() + tol) | (x >= x.max() - tol))
    else:
        hull = ConvexHull(X)
        # facet equations: normal·x + offset <= 0 inside
        dist = X @ hull.equations[:, :-1].T + hull.equations[:, -1]
        boundary = np.flatnonzero(np.max(dist, axis=1) >= -HULL_TOL * scale)
    boundary_ids = tuple(int(i) for i in boundary)
    interior_ids = tuple(i for i in range(len(P)) if i not in set(boundary_ids))
    missing = [i for i in leader_ids if i not in set(boundary_ids)]
    if missing:
        raise TopologyError(f"leaders {missing} are not on the formation hull")
    if len(boundary_ids) < n + 1:
        raise TopologyError(f"hull has {len(boundary_ids)} agents, need at least {n + 1}")
    return boundary_ids, interior_ids


def proximity_in_neighbors(i: int, formation: Formation) -> tuple[tuple[int, ...], float]:
    """In-neighbors of interior agent i and the minimal proximity radius l_i*.

    Radii are swept over the sorted distances to the other agents. At each
    radius every (n+1)-subset of agents within it is tested with the
    containment function; the first radius with a strictly containing
    simplex wins and ties go to the lexicographically smallest id tuple.
    """
    n = formation.n
    X = formation.frame_coords()
    P = formation.positions
    others = np.array([j for j in range(formation.N) if j != i])
    dist = np.linalg.norm(P[others] - P[i], axis=1)
    order = np.argsort(dist, kind="stable")
    others, dist = others[order], dist[order]
    radii = np.unique(dist)
    checked = 0
    for l in radii:
        k = int(np.searchsorted(dist, l, side="right"))
        if k < n + 1:
            continue
        pool = others[:k]
        # only simplices that use at least one newly admitted agent
        combos = [c for c in itertools.combinations(range(k), n + 1) if max(c) >= checked]
        checked = k
        if not combos:
            continue
        idx = pool[np.array(combos)]
        bary = batch_barycentric(X, idx, X[i])
        inside = np.all(bary > 0.0, axis=1) & np.all(np.isfinite(bary), axis=1)
        hits = [tuple(sorted(int(v) for v in idx[m])) for m in np.flatnonzero(inside)]
        # confirm with the determinant-sign containment test
        hits = [h for h in hits if abs(containment_fn(P[list(h)], P[i], n)) == n + 1]
        if hits:
            return min(hits), float(l)
    raise TopologyError(f"agent {i} is not strictly inside any simplex of other agents")


def communication_weights(i: int, in_neighbors, positions: ArrayLike, n: int) -> NDArray[np.float64]:
    """Barycentric weights of agent i in its in-neighbor simplex (sum to 1)."""
    P = np.asarray(positions, dtype=float)
    V = P[list(in_neighbors)]
    if rank_fn(V, n) != n:
        raise DegenerateSimplexError(f"in-neighbors {tuple(in_neighbors)} of agent {i} are degenerate")
    origin, basis = affine_frame(V, n)
    E = basis.T @ (V[1:] - V[0]).T
    rhs = basis.T @ (P[i] - V[0])
    try:
        tail = np.linalg.solve(E, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rank check guards this
        raise DegenerateSimplexError(str(exc)) from exc
    return np.concatenate([[1.0 - tail.sum()], tail])


@dataclass(frozen=True)
class CommTopology:
    """Immutable communication graph and its matrices.

    ``W``, ``L`` and ``L0`` use original agent indexing; ``F`` and ``G`` are
    the blocks of W after ordering leaders first (``order``).
    """

    n: int
    leader_ids: tuple[int, ...]
    in_neighbors: dict[int, tuple[int, ...]]
    weights: dict[int, NDArray[np.float64]]
    proximity_radius: dict[int, float]
    W: NDArray[np.float64]
    L: NDArray[np.float64]
    L0: NDArray[np.float64]
    F: NDArray[np.float64]
    G: NDArray[np.float64]
    order: tuple[int, ...]
    negative_weight_followers: tuple[int, ...] = field(default=())

    @property
    def N(self) -> int:
        return self.W.shape[0]

    def neighbor_arrays(self):
        """Dense (N, n+1) neighbor ids and weights; leader rows are unused."""
        nbr = np.zeros((self.N, self.n + 1), dtype=int)
        w = np.zeros((self.N, self.n + 1))
        for i, ids in self.in_neighbors.items():
            nbr[i] = ids
            w[i] = self.weights[i]
        return nbr, w


def assemble_matrices(formation: Formation, in_neighbors: dict, weights: dict,
                      proximity_radius: dict | None = None) -> CommTopology:
    N, n = formation.N, formation.n
    W = np.zeros((N, N))
    for i, ids in in_neighbors.items():
        for j, w in zip(ids, weights[i]):
            W[i, j] += w
    L = -np.eye(N) + W
    L0 = np.zeros((N, n + 1))
    for k, j in enumerate(formation.leader_ids):
        L0[j, k] = 1.0
    order = tuple(formation.leader_ids) + formation.follower_ids
    Wp = W[np.ix_(order, order)]
    F = Wp[n + 1:, : n + 1].copy()
    G = Wp[n + 1:, n + 1:].copy()
    negative = tuple(sorted(i for i, w in weights.items() if np.any(w < 0.0)))
    return CommTopology(
        n=n,
        leader_ids=tuple(formation.leader_ids),
        in_neighbors={int(k): tuple(v) for k, v in in_neighbors.items()},
        weights={int(k): np.asarray(v, dtype=float) for k, v in weights.items()},
        proximity_radius=dict(proximity_radius or {}),
        W=W, L=L, L0=L0, F=F, G=G, order=order,
        negative_weight_followers=negative,
    )


def build_topology(formation: Formation) -> CommTopology:
    """In-neighbors and weights for every follower, then the W/F/G/L matrices."""
    leaders = set(formation.leader_ids)
    interior = set(formation.interior_ids)
    nbrs, weights, radius = {}, {}, {}
    for i in formation.follower_ids:
        if i in interior:
            ids, l = proximity_in_neighbors(i, formation)
            radius[i] = l
        else:
            ids = tuple(formation.leader_ids)
        assert i not in leaders
        nbrs[i] = ids
        weights[i] = communication_weights(i, ids, formation.positions, formation.n)
    return assemble_matrices(formation, nbrs, weights, radius)


@dataclass(frozen=True)
class StabilityReport:
    rho_G: float
    L_eigs: NDArray[np.complex128]
    hurwitz: bool
    G_nonnegative: bool
    negative_weight_followers: tuple[int, ...]

    @property
    def max_real(self) -> float:
        return float(np.max(self.L_eigs.real))

    def to_dict(self) -> dict:
        return {
            "rho_G": self.rho_G,
            "max_real_eig_L": self.max_real,
            "L_eigs": [[float(z.real), float(z.imag)] for z in self.L_eigs],
            "hurwitz": self.hurwitz,
            "G_nonnegative": self.G_nonnegative,
            "negative_weight_followers": list(self.negative_weight_followers),
        }


def certify_stability(topology: CommTopology) -> StabilityReport:
    """Hurwitz test of L = -I + W (all Re λ < -1e-9) and ρ(G)."""
    eigs = np.linalg.eigvals(topology.L)
    eigs = eigs[np.lexsort((eigs.imag, eigs.real))]
    rho = float(np.max(np.abs(np.linalg.eigvals(topology.G)))) if topology.G.size else 0.0
    return StabilityReport(
        rho_G=rho,
        L_eigs=eigs,
        hurwitz=bool(np.all(eigs.real < -1e-9)),
        G_nonnegative=bool(np.all(topology.G >= 0.0)),
        negative_weight_followers=topology.negative_weight_followers,
    )


def compute_H(topology: CommTopology) -> NDArray[np.float64]:
    """H = -L⁻¹ L0 by a linear solve."""
    try:
        return -np.linalg.solve(topology.L, topology.L0)
    except np.linalg.LinAlgError as exc:
        raise TopologyError(f"L is singular: {exc}") from exc


def topology_audit(topology: CommTopology, report: StabilityReport | None = None) -> dict:
    """JSON-ready audit: per-follower in-neighbors and weights plus the certificate."""
    report = report or certify_stability(topology)
    followers = {
        str(i): {
            "in_neighbors": list(topology.in_neighbors[i]),
            "weights": [float(w) for w in topology.weights[i]],
            "proximity_radius": topology.proximity_radius.get(i),
        }
        for i in sorted(topology.in_neighbors)
    }
    return {"n": topology.n, "leaders": list(topology.leader_ids),
            "followers": followers, **report.to_dict()}


def dumps_audit(topology: CommTopology, report: StabilityReport | None = None) -> str:
    return json.dumps(topology_audit(topology, report), indent=2, sort_keys=True)
