"""Ground-truth navigability grid and shortest-path lengths (metrics only)."""
from __future__ import annotations

import math

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ..errors import DisconnectedError, InvalidArgument
from .scene import SceneSpec

METRIC_CELL = 0.05
SNAP_TOLERANCE = 0.1


class NavGrid:
    """Cells whose centre admits the agent disc without touching any obstacle."""

    def __init__(self, scene: SceneSpec, cell: float = METRIC_CELL, agent_radius: float = 0.2):
        self.cell = cell
        self.agent_radius = agent_radius
        b = scene.bounds
        self.origin = np.array([b.lo[0], b.lo[1]])
        self.nx = int(math.floor((b.hi[0] - b.lo[0]) / cell))
        self.ny = int(math.floor((b.hi[1] - b.lo[1]) / cell))
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * cell
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * cell
        free = np.ones((self.nx, self.ny), dtype=bool)
        r = agent_radius
        free &= (xs[:, None] - r >= b.lo[0]) & (xs[:, None] + r <= b.hi[0])
        free &= (ys[None, :] - r >= b.lo[1]) & (ys[None, :] + r <= b.hi[1])
        for xmin, ymin, xmax, ymax in scene.footprints:
            i0 = max(int(math.floor((xmin - r - self.origin[0]) / cell)), 0)
            i1 = min(int(math.ceil((xmax + r - self.origin[0]) / cell)), self.nx)
            j0 = max(int(math.floor((ymin - r - self.origin[1]) / cell)), 0)
            j1 = min(int(math.ceil((ymax + r - self.origin[1]) / cell)), self.ny)
            if i0 >= i1 or j0 >= j1:
                continue
            dx = np.maximum(np.maximum(xmin - xs[i0:i1], 0.0), xs[i0:i1] - xmax)
            dy = np.maximum(np.maximum(ymin - ys[j0:j1], 0.0), ys[j0:j1] - ymax)
            free[i0:i1, j0:j1] &= np.hypot(dx[:, None], dy[None, :]) >= r
        self.free = free
        self._graph = None
        self._labels = None

    def index(self, p) -> tuple[int, int]:
        return (int(math.floor((p[0] - self.origin[0]) / self.cell)),
                int(math.floor((p[1] - self.origin[1]) / self.cell)))

    def center(self, i: int, j: int) -> np.ndarray:
        return self.origin + (np.array([i, j]) + 0.5) * self.cell

    def snap(self, p, tolerance: float = SNAP_TOLERANCE) -> tuple[int, int]:
        """Nearest navigable cell to ``p`` within ``tolerance`` metres."""
        i, j = self.index(p)
        reach = int(math.ceil(tolerance / self.cell)) + 1
        best, best_d = None, np.inf
        for a in range(max(i - reach, 0), min(i + reach + 1, self.nx)):
            for b in range(max(j - reach, 0), min(j + reach + 1, self.ny)):
                if self.free[a, b]:
                    d = float(np.linalg.norm(self.center(a, b) - np.asarray(p[:2])))
                    if d < best_d:
                        best, best_d = (a, b), d
        if best is None or best_d > tolerance + self.cell * math.sqrt(2) / 2:
            raise InvalidArgument(f"point {tuple(p[:2])} is not navigable")
        return best

    def is_navigable(self, p) -> bool:
        try:
            self.snap(p)
        except InvalidArgument:
            return False
        return True

    @property
    def graph(self) -> sparse.csr_matrix:
        if self._graph is None:
            self._graph = self._build_graph()
        return self._graph

    def _build_graph(self) -> sparse.csr_matrix:
        nx, ny = self.nx, self.ny
        idx = np.arange(nx * ny).reshape(nx, ny)
        f = self.free
        rows, cols, weights = [], [], []

        def link(sa, sb, ok, w):
            rows.append(idx[sa][ok])
            cols.append(idx[sb][ok])
            weights.append(np.full(int(ok.sum()), w))

        s = slice(None)
        # axis neighbours
        link((slice(0, nx - 1), s), (slice(1, nx), s), f[:-1, :] & f[1:, :], self.cell)
        link((s, slice(0, ny - 1)), (s, slice(1, ny)), f[:, :-1] & f[:, 1:], self.cell)
        # diagonals, no corner cutting
        d = self.cell * math.sqrt(2)
        ok = f[:-1, :-1] & f[1:, 1:] & f[1:, :-1] & f[:-1, 1:]
        link((slice(0, nx - 1), slice(0, ny - 1)), (slice(1, nx), slice(1, ny)), ok, d)
        link((slice(1, nx), slice(0, ny - 1)), (slice(0, nx - 1), slice(1, ny)), ok, d)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        w = np.concatenate(weights)
        g = sparse.coo_matrix((w, (r, c)), shape=(nx * ny, nx * ny)).tocsr()
        return g

    @property
    def components(self) -> np.ndarray:
        """(nx, ny) component label per cell; -1 on non-navigable cells."""
        if self._labels is None:
            _, labels = csgraph.connected_components(self.graph, directed=False)
            labels = labels.reshape(self.nx, self.ny)
            labels[~self.free] = -1
            self._labels = labels
        return self._labels

    def distance_field(self, source) -> np.ndarray:
        i, j = self.snap(source)
        dist = csgraph.dijkstra(self.graph, directed=False, indices=i * self.ny + j)
        return dist.reshape(self.nx, self.ny)


def nav_grid(scene: SceneSpec, agent_radius: float = 0.2) -> NavGrid:
    key = f"_nav_grid_{agent_radius!r}"
    g = scene.__dict__.get(key)
    if g is None:
        g = NavGrid(scene, agent_radius=agent_radius)
        scene.__dict__[key] = g
    return g


def geodesic_distance(scene: SceneSpec, a, b, agent_radius: float = 0.2) -> float:
    grid = nav_grid(scene, agent_radius)
    ia = grid.snap(a)
    ib = grid.snap(b)
    if ia == ib:
        return 0.0
    field = grid.distance_field(a)
    d = float(field[ib])
    if not np.isfinite(d):
        raise DisconnectedError(f"no path between {tuple(a[:2])} and {tuple(b[:2])}")
    return d


def geodesic_to_set(scene: SceneSpec, a, points, agent_radius: float = 0.2) -> float:
    """Shortest-path length from ``a`` to the nearest of ``points``."""
    grid = nav_grid(scene, agent_radius)
    field = grid.distance_field(a)
    ia = grid.snap(a)
    best = np.inf
    for p in points:
        ib = grid.snap(p)
        best = min(best, 0.0 if ib == ia else float(field[ib]))
    if not np.isfinite(best):
        raise DisconnectedError(f"no goal reachable from {tuple(a[:2])}")
    return best
