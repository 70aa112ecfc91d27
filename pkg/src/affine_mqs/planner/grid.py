"""Axis-aligned 3-D occupancy grid with a run-length-encoded text format.

File layout::

    # comments allowed
    origin <x> <y> <z>
    cell_size <c>
    dims <nx> <ny> <nz>
    rle
    <value> <count> <value> <count> ...

Cells are flattened in C order of the (ix, iy, iz) index, values are 0/1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage
from scipy.spatial import cKDTree

SQRT3 = float(np.sqrt(3.0))


class GridError(ValueError):
    pass


@dataclass
class OccupancyGrid:
    origin: NDArray[np.float64]
    cell_size: float
    occupied: NDArray[np.bool_]

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.occupied = np.asarray(self.occupied, dtype=bool)
        if self.cell_size <= 0:
            raise GridError("cell_size must be positive")
        if self.occupied.ndim != 3 or 0 in self.occupied.shape:
            raise GridError(f"dims must be three positive integers, got {self.occupied.shape}")
        self._tree = None

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.occupied.shape)

    @classmethod
    def empty(cls, origin, cell_size: float, dims) -> "OccupancyGrid":
        return cls(origin, float(cell_size), np.zeros(tuple(int(d) for d in dims), dtype=bool))

    @classmethod
    def from_boxes(cls, origin, cell_size: float, dims, boxes) -> "OccupancyGrid":
        """Mark every cell whose center lies in one of the [lo, hi] boxes."""
        g = cls.empty(origin, cell_size, dims)
        centers = g.cell_centers()
        for lo, hi in boxes:
            lo, hi = np.asarray(lo, float), np.asarray(hi, float)
            g.occupied |= np.all((centers >= lo) & (centers <= hi), axis=-1)
        return g

    def cell_centers(self) -> NDArray[np.float64]:
        idx = np.stack(np.meshgrid(*(np.arange(d) for d in self.dims), indexing="ij"), axis=-1)
        return self.origin + (idx + 0.5) * self.cell_size

    def center_of(self, idx) -> NDArray[np.float64]:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.cell_size

    def index_of(self, point: ArrayLike) -> tuple[int, int, int]:
        rel = (np.asarray(point, dtype=float) - self.origin) / self.cell_size
        idx = np.floor(rel).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.dims)):
            raise GridError(f"point {np.asarray(point).tolist()} is outside the grid")
        return tuple(int(i) for i in idx)

    def contains(self, point: ArrayLike) -> bool:
        rel = (np.asarray(point, dtype=float) - self.origin) / self.cell_size
        return bool(np.all(rel >= 0) and np.all(rel < np.array(self.dims)))

    # --- clearance ---------------------------------------------------------

    def center_clearance(self) -> NDArray[np.float64]:
        """Distance from each cell center to the nearest occupied cell center."""
        if not self.occupied.any():
            return np.full(self.dims, np.inf)
        return ndimage.distance_transform_edt(~self.occupied, sampling=self.cell_size)

    def traversable(self, radius: float) -> NDArray[np.bool_]:
        """Cells whose whole cube stays at least ``radius`` from every occupied cube.

        A margin of sqrt(3) cells on the center-to-center distance covers
        the half-diagonals of both the free and the occupied cube.
        """
        return self.center_clearance() >= radius + SQRT3 * self.cell_size

    def _kdtree(self):
        if self._tree is None and self.occupied.any():
            self._tree = cKDTree(self.center_of(np.argwhere(self.occupied)))
        return self._tree

    def clearance(self, points: ArrayLike) -> NDArray[np.float64]:
        """Exact Euclidean distance from points to the nearest occupied cube."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._kdtree()
        if tree is None:
            return np.full(len(pts), np.inf)
        h = 0.5 * self.cell_size
        dc, _ = tree.query(pts)
        out = np.maximum(dc - SQRT3 * h, 0.0)
        # the center bound is loose by at most sqrt(3)·h; refine near points
        for k in np.flatnonzero(np.isfinite(dc)):
            cand = tree.query_ball_point(pts[k], dc[k] + SQRT3 * h)
            c = tree.data[cand]
            gap = np.maximum(np.abs(pts[k] - c) - h, 0.0)
            out[k] = float(np.min(np.linalg.norm(gap, axis=1)))
        return out

    def min_clearance_fast(self, points: ArrayLike, threshold: float) -> NDArray[np.float64]:
        """Clearance that is exact only where it may fall below ``threshold``.

        Points whose center distance certifies clearance above the threshold
        get the (lower-bound) center estimate; the rest are refined.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._kdtree()
        if tree is None:
            return np.full(len(pts), np.inf)
        dc, _ = tree.query(pts)
        out = np.maximum(dc - SQRT3 * 0.5 * self.cell_size, 0.0)
        near = out <= threshold
        if near.any():
            out[near] = self.clearance(pts[near])
        return out

    # --- io -------------------------------------------------------------

    def to_text(self) -> str:
        flat = self.occupied.ravel(order="C").astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate([[0], change])
        counts = np.diff(np.concatenate([starts, [flat.size]]))
        runs = " ".join(f"{int(flat[s])} {int(c)}" for s, c in zip(starts, counts))
        o = [float(v) for v in self.origin]
        return (
            f"origin {o[0]!r} {o[1]!r} {o[2]!r}\n"
            f"cell_size {float(self.cell_size)!r}\n"
            f"dims {self.dims[0]} {self.dims[1]} {self.dims[2]}\n"
            f"rle\n{runs}\n"
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "OccupancyGrid":
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        header, body = {}, []
        in_body = False
        for ln in lines:
            if in_body:
                body.extend(ln.split())
                continue
            key, *vals = ln.split()
            if key == "rle":
                in_body = True
            else:
                header[key] = vals
        try:
            origin = [float(v) for v in header["origin"]]
            cell = float(header["cell_size"][0])
            dims = tuple(int(v) for v in header["dims"])
        except (KeyError, IndexError, ValueError) as exc:
            raise GridError(f"bad grid header: {exc}") from exc
        if len(body) % 2:
            raise GridError("run-length body must hold value/count pairs")
        vals = np.array(body[0::2], dtype=int)
        counts = np.array(body[1::2], dtype=int)
        if np.any((vals != 0) & (vals != 1)) or np.any(counts < 0):
            raise GridError("run values must be 0/1 with non-negative counts")
        flat = np.repeat(vals.astype(bool), counts)
        if flat.size != int(np.prod(dims)):
            raise GridError(f"run lengths cover {flat.size} cells, dims need {int(np.prod(dims))}")
        return cls(origin, cell, flat.reshape(dims))

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        return cls.from_text(Path(path).read_text())
