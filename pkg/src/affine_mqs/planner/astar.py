"""26-connected A* on an occupancy grid, plus line-of-sight shortcutting."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .grid import GridError, OccupancyGrid


class NoPathError(RuntimeError):
    pass


_MOVES = [m for m in itertools.product((-1, 0, 1), repeat=3) if m != (0, 0, 0)]


def grid_astar(free: ArrayLike, start, goal, use_heuristic: bool = True):
    """Shortest 26-connected path between two free cells.

    Edge cost is the Euclidean step length in cell units (1, √2 or √3) and
    the heuristic is the straight-line distance to the goal, which is
    consistent for these moves. With ``use_heuristic=False`` this is plain
    Dijkstra.

    Returns ``(path, cost)`` with path a list of index triples.
    """
    free = np.asarray(free, dtype=bool)
    X, Y, Z = free.shape
    start, goal = tuple(int(v) for v in start), tuple(int(v) for v in goal)
    for name, c in (("start", start), ("goal", goal)):
        if not all(0 <= c[k] < free.shape[k] for k in range(3)):
            raise GridError(f"{name} cell {c} outside grid")
        if not free[c]:
            raise NoPathError(f"{name} cell {c} is occupied")

    # one-cell blocked border removes bounds checks from the inner loop
    P = np.pad(free, 1, constant_values=False)
    PY, PZ = Y + 2, Z + 2
    freeflat = P.ravel().tolist()

    def flat(c):
        return ((c[0] + 1) * PY + (c[1] + 1)) * PZ + (c[2] + 1)

    moves = [((dx * PY + dy) * PZ + dz, math.sqrt(dx * dx + dy * dy + dz * dz)) for dx, dy, dz in _MOVES]
    s, gl = flat(start), flat(goal)
    gx, gy, gz = goal[0] + 1, goal[1] + 1, goal[2] + 1

    def h(node):
        if not use_heuristic:
            return 0.0
        q, z = divmod(node, PZ)
        x, y = divmod(q, PY)
        return math.sqrt((x - gx) ** 2 + (y - gy) ** 2 + (z - gz) ** 2)

    gbest = {s: 0.0}
    parent = {s: -1}
    closed = set()
    tie = itertools.count()
    heap = [(h(s), next(tie), s)]
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == gl:
            break
        closed.add(cur)
        gc = gbest[cur]
        for off, cost in moves:
            nb = cur + off
            if not freeflat[nb] or nb in closed:
                continue
            ng = gc + cost
            if ng < gbest.get(nb, math.inf):
                gbest[nb] = ng
                parent[nb] = cur
                heapq.heappush(heap, (ng + h(nb), next(tie), nb))
    else:
        raise NoPathError(f"no path from {start} to {goal}")

    path = []
    node = gl
    while node != -1:
        q, z = divmod(node, PZ)
        x, y = divmod(q, PY)
        path.append((x - 1, y - 1, z - 1))
        node = parent[node]
    path.reverse()
    return path, gbest[gl]


def path_length(points: ArrayLike) -> float:
    P = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))


def segment_clear(grid: OccupancyGrid, a: ArrayLike, b: ArrayLike, radius: float) -> bool:
    """True when every point of segment ab is at least ``radius`` from occupied cubes.

    Samples are spaced ``cell/4`` apart and must clear ``radius`` plus half
    a spacing, which covers the stretch between samples.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    spacing = 0.25 * grid.cell_size
    n = max(int(math.ceil(np.linalg.norm(b - a) / spacing)), 1)
    step = np.linalg.norm(b - a) / n
    ts = np.linspace(0.0, 1.0, n + 1)
    pts = a + ts[:, None] * (b - a)
    if not all(grid.contains(p) for p in (a, b)):
        return False
    need = radius + 0.5 * step
    return bool(np.all(grid.min_clearance_fast(pts, need) >= need))


def shortcut(points: list, is_clear) -> list:
    """Greedy line-of-sight simplification: jump to the farthest visible point."""
    out = [points[0]]
    i = 0
    last = len(points) - 1
    while i < last:
        j = last
        while j > i + 1 and not is_clear(points[i], points[j]):
            j -= 1
        out.append(points[j])
        i = j
    return out


@dataclass
class PathResult:
    waypoints: NDArray[np.float64]
    cells: list
    grid_cost: float  # meters, along cell centers

    @property
    def length(self) -> float:
        return path_length(self.waypoints)


def plan_path(grid: OccupancyGrid, d0: ArrayLike, df: ArrayLike, r_max: float) -> PathResult:
    """A* over cells that keep the containment ball clear, then shortcut."""
    d0, df = np.asarray(d0, float), np.asarray(df, float)
    free = grid.traversable(r_max)
    s, g = grid.index_of(d0), grid.index_of(df)
    if not free[s]:
        raise NoPathError(f"start {d0.tolist()} is occupied after inflating obstacles by r_max")
    if not free[g]:
        raise NoPathError(f"goal {df.tolist()} is occupied after inflating obstacles by r_max")
    cells, cost = grid_astar(free, s, g)
    pts = [d0] + [grid.center_of(c) for c in cells[1:-1]] + [df]
    if len(cells) == 1:
        pts = [d0, df]
    simplified = shortcut(pts, lambda a, b: segment_clear(grid, a, b, r_max))
    for a, b in zip(simplified[:-1], simplified[1:]):
        if not segment_clear(grid, a, b, r_max):
            raise NoPathError(f"segment {a.tolist()} -> {b.tolist()} cannot keep r_max clearance")
    return PathResult(np.array(simplified), cells, cost * grid.cell_size)


def astar_waypoints(grid: OccupancyGrid, d0: ArrayLike, df: ArrayLike, r_max: float) -> NDArray[np.float64]:
    """Waypoints d̄_0..d̄_nτ of the containment-ball path."""
    return plan_path(grid, d0, df, r_max).waypoints
