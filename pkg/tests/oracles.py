"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


def grid_graph(free):
    """26-connected free-cell graph with Euclidean edge weights (cell units)."""
    free = np.asarray(free, bool)
    shape = free.shape
    idx = np.arange(free.size).reshape(shape)
    rows, cols, w = [], [], []
    for m in itertools.product((-1, 0, 1), repeat=3):
        if m <= (0, 0, 0):
            continue  # each undirected edge once
        src = tuple(slice(max(0, -d), s - max(0, d)) for d, s in zip(m, shape))
        dst = tuple(slice(max(0, d), s - max(0, -d)) for d, s in zip(m, shape))
        ok = free[src] & free[dst]
        rows.append(idx[src][ok])
        cols.append(idx[dst][ok])
        w.append(np.full(ok.sum(), np.sqrt(sum(d * d for d in m))))
    r, c, ww = np.concatenate(rows), np.concatenate(cols), np.concatenate(w)
    return coo_matrix((ww, (r, c)), shape=(free.size, free.size)).tocsr()


def dijkstra_cost(free, start, goal, limit=np.inf):
    free = np.asarray(free, bool)
    G = grid_graph(free)
    s = np.ravel_multi_index(start, free.shape)
    g = np.ravel_multi_index(goal, free.shape)
    d = dijkstra(G, directed=False, indices=s, limit=limit)
    return float(d[g])


def fd_derivatives(f, t, h, order):
    """Central finite-difference derivatives 0..order of f at t (f returns arrays)."""
    stencils = {
        1: ([-1, 1], [-0.5, 0.5]),
        2: ([-1, 0, 1], [1, -2, 1]),
        3: ([-2, -1, 1, 2], [-0.5, 1, -1, 0.5]),
        4: ([-2, -1, 0, 1, 2], [1, -4, 6, -4, 1]),
    }
    out = [np.asarray(f(t))]
    for k in range(1, order + 1):
        off, c = stencils[k]
        out.append(sum(ci * np.asarray(f(t + o * h)) for o, ci in zip(off, c)) / h**k)
    return out


def newton_euler_derivative(x, u, m, J, g=9.81):
    """Second implementation of the extended quadcopter model.

    Attitude from explicit 3-2-1 rotation products; Euler rates from the
    body-rate relation solved numerically.
    """
    phi, th, psi = x[6:9]
    Rx = np.array([[1, 0, 0], [0, np.cos(phi), -np.sin(phi)], [0, np.sin(phi), np.cos(phi)]])
    Ry = np.array([[np.cos(th), 0, np.sin(th)], [0, 1, 0], [-np.sin(th), 0, np.cos(th)]])
    Rz = np.array([[np.cos(psi), -np.sin(psi), 0], [np.sin(psi), np.cos(psi), 0], [0, 0, 1]])
    body_to_world = Rz @ Ry @ Rx
    thrust_dir = body_to_world[:, 2]
    # body rates ω = E(φ, θ) (φ̇, θ̇, ψ̇)
    E = np.array([[1, 0, -np.sin(th)],
                  [0, np.cos(phi), np.sin(phi) * np.cos(th)],
                  [0, -np.sin(phi), np.cos(phi) * np.cos(th)]])
    om = x[9:12]
    eul_rate = np.linalg.solve(E, om)
    om_dot = np.linalg.solve(J, u[1:4] - np.cross(om, J @ om))
    dx = np.empty(14)
    dx[0:3] = x[3:6]
    dx[3:6] = x[12] / m * thrust_dir - np.array([0, 0, g])
    dx[6:9] = eul_rate
    dx[9:12] = om_dot
    dx[12] = x[13]
    dx[13] = u[0]
    return dx
