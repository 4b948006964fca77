"""Planning on the agent's own map and discrete waypoint following.

The 3D map is projected to a 2D grid over the navigable height band: a column
is Occupied if any band voxel is occupied, Free if it has free voxels and no
occupied ones, Unknown otherwise. Occupied columns are inflated by the agent
radius. A* runs 8-connected without corner cutting; Unknown columns cost more.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .errors import NoPath, UnreachableGoal
from .occupancy import CellClass, VoxelGrid
from .sim.kinematics import Action

WAYPOINT_EVERY = 3
ARRIVAL_RADIUS = 0.3
HEADING_DEADBAND = 7.5


@numba.njit(cache=True)
def _astar(passable, unknown, start_i, start_j, goal_i, goal_j, unknown_cost):
    nx, ny = passable.shape
    n = nx * ny
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    # binary heap of (f, tie, node)
    cap = n + 16
    heap_f = np.empty(cap)
    heap_t = np.empty(cap, dtype=np.int64)
    heap_n = np.empty(cap, dtype=np.int64)
    size = 0
    counter = 0
    s = start_i * ny + start_j
    goal = goal_i * ny + goal_j
    g[s] = 0.0
    di = np.array([1, -1, 0, 0, 1, 1, -1, -1])
    dj = np.array([0, 0, 1, -1, 1, -1, 1, -1])
    sq2 = math.sqrt(2.0)

    # push start
    heap_f[0] = 0.0
    heap_t[0] = 0
    heap_n[0] = s
    size = 1
    while size > 0:
        # pop min
        f0 = heap_f[0]
        node = heap_n[0]
        size -= 1
        if size > 0:
            lf = heap_f[size]
            lt = heap_t[size]
            ln = heap_n[size]
            k = 0
            while True:
                c = 2 * k + 1
                if c >= size:
                    break
                if c + 1 < size and (heap_f[c + 1] < heap_f[c] or
                                     (heap_f[c + 1] == heap_f[c] and heap_t[c + 1] < heap_t[c])):
                    c += 1
                if heap_f[c] < lf or (heap_f[c] == lf and heap_t[c] < lt):
                    heap_f[k] = heap_f[c]
                    heap_t[k] = heap_t[c]
                    heap_n[k] = heap_n[c]
                    k = c
                else:
                    break
            heap_f[k] = lf
            heap_t[k] = lt
            heap_n[k] = ln
        if closed[node]:
            continue
        closed[node] = True
        if node == goal:
            break
        ci = node // ny
        cj = node % ny
        for m in range(8):
            ni = ci + di[m]
            nj = cj + dj[m]
            if ni < 0 or nj < 0 or ni >= nx or nj >= ny:
                continue
            if not passable[ni, nj]:
                continue
            if m >= 4 and (not passable[ci + di[m], cj] or not passable[ci, cj + dj[m]]):
                continue
            step = sq2 if m >= 4 else 1.0
            if unknown[ni, nj]:
                step *= unknown_cost
            nb = ni * ny + nj
            cand = g[node] + step
            if cand < g[nb]:
                g[nb] = cand
                parent[nb] = node
                ddx = abs(ni - goal_i)
                ddy = abs(nj - goal_j)
                h = (sq2 - 1.0) * min(ddx, ddy) + max(ddx, ddy)
                counter += 1
                # push
                if size == cap:
                    cap *= 2
                    nf = np.empty(cap)
                    nt = np.empty(cap, dtype=np.int64)
                    nn = np.empty(cap, dtype=np.int64)
                    nf[:size] = heap_f[:size]
                    nt[:size] = heap_t[:size]
                    nn[:size] = heap_n[:size]
                    heap_f = nf
                    heap_t = nt
                    heap_n = nn
                k = size
                size += 1
                fv = cand + h
                while k > 0:
                    p = (k - 1) // 2
                    if heap_f[p] > fv or (heap_f[p] == fv and heap_t[p] > counter):
                        heap_f[k] = heap_f[p]
                        heap_t[k] = heap_t[p]
                        heap_n[k] = heap_n[p]
                        k = p
                    else:
                        break
                heap_f[k] = fv
                heap_t[k] = counter
                heap_n[k] = nb
    if not closed[goal]:
        return np.empty(0, dtype=np.int64), np.inf
    length = 0
    node = goal
    while node != -1:
        length += 1
        node = parent[node]
    out = np.empty(length, dtype=np.int64)
    node = goal
    for k in range(length - 1, -1, -1):
        out[k] = node
        node = parent[node]
    return out, g[goal]


def inflation_cells(agent_radius: float, voxel_size: float) -> int:
    """Obstacle inflation in cells: the agent radius plus half a voxel, since an occupied
    column can reach half a cell beyond its centre."""
    return int(math.ceil((agent_radius + voxel_size / 2) / voxel_size - 1e-9))


class PlanningMap:
    """2D traversability projection of a map region."""

    def __init__(self, grid: VoxelGrid, lo_xy, hi_xy, z_band=(0.2, 1.5), agent_radius: float = 0.2,
                 unknown_cost: float = 1.5):
        vs = grid.voxel_size
        self.voxel_size = vs
        self.unknown_cost = float(unknown_cost)
        lo_i = np.floor(np.asarray(lo_xy, dtype=np.float64) / vs).astype(np.int64)
        hi_i = np.ceil(np.asarray(hi_xy, dtype=np.float64) / vs).astype(np.int64)
        k0 = int(math.floor(z_band[0] / vs + 0.5 - 1e-9))
        k1 = int(math.floor(z_band[1] / vs - 0.5 + 1e-9)) + 1
        snap = grid.snapshot_indices((lo_i[0], lo_i[1], k0), (hi_i[0], hi_i[1], max(k1, k0 + 1)))
        cls = snap.classes
        occ = np.any(cls == CellClass.OCCUPIED, axis=2)
        free = np.any(cls == CellClass.FREE, axis=2) & ~occ
        self.origin = lo_i[:2]
        self.occupied = occ
        self.free = free
        self.unknown = ~occ & ~free
        self.radius_cells = inflation_cells(agent_radius, vs)
        # distance in cells from each column centre to the nearest occupied column centre
        if occ.any():
            self.clearance = ndimage.distance_transform_edt(~occ)
        else:
            self.clearance = np.full(occ.shape, np.inf)
        self.inflated = self.clearance <= self.radius_cells + 1e-9
        self.shape = occ.shape

    def cell(self, p) -> tuple[int, int]:
        return (int(math.floor(p[0] / self.voxel_size)) - int(self.origin[0]),
                int(math.floor(p[1] / self.voxel_size)) - int(self.origin[1]))

    def center(self, i, j) -> np.ndarray:
        return (np.array([i, j], dtype=np.float64) + self.origin + 0.5) * self.voxel_size

    def inside(self, i, j) -> bool:
        return 0 <= i < self.shape[0] and 0 <= j < self.shape[1]

    def passable_from(self, start_cell) -> np.ndarray:
        """Traversable cells.

        An agent that starts inside the inflated band may move through it, but
        only over cells at least as clear of obstacles as its own, so it can back
        away or slide along an obstacle without closing in on it.
        """
        passable = ~self.inflated
        si, sj = start_cell
        if not self.inside(si, sj):
            return passable
        r = self.radius_cells
        i0, i1 = max(si - r, 0), min(si + r + 1, self.shape[0])
        j0, j1 = max(sj - r, 0), min(sj + r + 1, self.shape[1])
        own = self.clearance[si, sj]
        near = self.clearance[i0:i1, j0:j1]
        passable[i0:i1, j0:j1] |= (near >= own - 1e-9) & ~self.occupied[i0:i1, j0:j1]
        passable[si, sj] = True
        return passable

    def project_goal(self, goal, radius: float = 2.0) -> tuple[int, int]:
        """Nearest map-Free, non-inflated cell within ``radius`` of ``goal``."""
        gi, gj = self.cell(goal)
        r = int(math.ceil(radius / self.voxel_size))
        i0, i1 = max(gi - r, 0), min(gi + r + 1, self.shape[0])
        j0, j1 = max(gj - r, 0), min(gj + r + 1, self.shape[1])
        if i0 >= i1 or j0 >= j1:
            raise UnreachableGoal(f"goal {tuple(np.round(goal[:2], 3))} is outside the mapped area")
        ok = self.free[i0:i1, j0:j1] & ~self.inflated[i0:i1, j0:j1]
        if not ok.any():
            raise UnreachableGoal(f"no free cell within {radius} m of goal {tuple(np.round(goal[:2], 3))}")
        ii, jj = np.nonzero(ok)
        ci = (ii + i0 + self.origin[0] + 0.5) * self.voxel_size
        cj = (jj + j0 + self.origin[1] + 0.5) * self.voxel_size
        d2 = (ci - goal[0]) ** 2 + (cj - goal[1]) ** 2
        order = np.lexsort((jj, ii, d2))
        k = order[0]
        if d2[k] > (radius + 1e-9) ** 2:
            raise UnreachableGoal(f"no free cell within {radius} m of goal {tuple(np.round(goal[:2], 3))}")
        return int(ii[k] + i0), int(jj[k] + j0)

    def plan(self, start, goal, goal_radius: float = 2.0, target_region=None) -> "Path":
        start = np.asarray(start, dtype=np.float64)[:2]
        goal = np.asarray(goal, dtype=np.float64)[:2]
        sc = self.cell(start)
        if not self.inside(*sc):
            raise NoPath("start lies outside the planning map")
        gc = self.project_goal(goal, goal_radius)
        passable = self.passable_from(sc)
        cells, cost = _astar(passable, self.unknown, sc[0], sc[1], gc[0], gc[1], self.unknown_cost)
        if cells.size == 0:
            raise NoPath(f"no path from {tuple(np.round(start, 3))} to {tuple(np.round(goal, 3))}")
        ij = np.stack(np.divmod(cells, self.shape[1]), axis=1)
        pts = self._waypoints(ij, start, passable)
        return Path(deque(pts), target_region, self.center(*gc), float(cost) * self.voxel_size,
                    cells_ij=ij + self.origin)

    def _chord_clear(self, p, q, passable) -> bool:
        """True if every cell the straight segment p -> q crosses is passable."""
        n = int(math.ceil(np.linalg.norm(q - p) / (self.voxel_size / 4))) + 1
        t = np.linspace(0.0, 1.0, n)[:, None]
        pts = p[None, :] + t * (q - p)[None, :]
        idx = np.floor(pts / self.voxel_size).astype(np.int64) - self.origin[None, :]
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            return False
        return bool(np.all(passable[idx[:, 0], idx[:, 1]]))

    def _waypoints(self, ij, start, passable) -> list:
        """Every ``WAYPOINT_EVERY``-th path cell, pulled back where the straight chord
        from the previous waypoint would clip an inflated corner."""
        n = len(ij)
        if n == 1:
            return [self.center(*ij[0])]
        pts, anchor, a = [], start, 0
        while a < n - 1:
            k = min(a + WAYPOINT_EVERY, n - 1)
            while k > a + 1 and not self._chord_clear(anchor, self.center(*ij[k]), passable):
                k -= 1
            anchor = self.center(*ij[k])
            pts.append(anchor)
            a = k
        return pts


@dataclass
class Path:
    waypoints: deque
    target_region: int | None = None
    goal: np.ndarray | None = None
    cost: float = 0.0
    cells_ij: np.ndarray | None = field(default=None, repr=False)   # global column indices

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def length(self) -> float:
        pts = list(self.waypoints)
        return float(sum(np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])))

    def copy(self) -> "Path":
        return Path(deque(np.array(p) for p in self.waypoints), self.target_region,
                    None if self.goal is None else self.goal.copy(), self.cost, self.cells_ij)


def planning_bounds(grid: VoxelGrid, points, margin: float = 2.5):
    """Planar box covering the mapped blocks and ``points`` with a margin, clipped to the snapshot cap."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    b = grid.index_bounds()
    if b is not None:
        lo = np.minimum(lo, b[0][:2] * grid.voxel_size)
        hi = np.maximum(hi, b[1][:2] * grid.voxel_size)
    cap = np.asarray(grid.snapshot_cap[:2])
    over = (hi - lo) - cap
    if np.any(over > 0):
        # keep the box centred on the query points
        mid = pts.mean(axis=0)
        lo = np.where(over > 0, mid - cap / 2 + 1e-6, lo)
        hi = np.where(over > 0, mid + cap / 2 - 1e-6, hi)
    return lo, hi


def plan_path(grid: VoxelGrid, start, goal, agent_radius: float = 0.2, z_band=(0.2, 1.5),
              unknown_cost: float = 1.5, goal_radius: float = 2.0, target_region=None) -> Path:
    start = np.asarray(start, dtype=np.float64)[:2]
    goal = np.asarray(goal, dtype=np.float64)[:2]
    lo, hi = planning_bounds(grid, [start, goal])
    pm = PlanningMap(grid, lo, hi, z_band, agent_radius, unknown_cost)
    return pm.plan(start, goal, goal_radius, target_region)


def _wrap(deg: float) -> float:
    return (deg + 180.0) % 360.0 - 180.0


def follow(path: Path, state, arrival_radius: float = ARRIVAL_RADIUS,
           deadband: float = HEADING_DEADBAND) -> tuple[Action | None, Path]:
    """Next action toward the path, and the path with reached waypoints removed.

    Returns ``None`` as the action once every waypoint has been reached.
    """
    p = np.array([state.x, state.y])
    wps = deque(path.waypoints)
    while wps and np.linalg.norm(np.asarray(wps[0]) - p) <= arrival_radius:
        wps.popleft()
    rest = Path(wps, path.target_region, path.goal, path.cost, path.cells_ij)
    if not wps:
        return None, rest
    d = np.asarray(wps[0]) - p
    err = _wrap(math.degrees(math.atan2(d[1], d[0])) - state.yaw)
    if err > deadband:
        return Action.TURN_LEFT, rest
    if err < -deadband:
        return Action.TURN_RIGHT, rest
    return Action.FORWARD, rest


class StallDetector:
    """Ring of the last ``window`` poses and whether a forward move was attempted at each."""

    def __init__(self, window: int = 20, threshold: float = 0.1):
        self.window = window
        self.threshold = threshold
        self.history: deque = deque(maxlen=window)

    def push(self, x: float, y: float, forward: bool) -> None:
        self.history.append((float(x), float(y), bool(forward)))

    def clear(self) -> None:
        self.history.clear()

    def stalled(self) -> bool:
        return stall_detector(self.history, self.window, self.threshold)


def stall_detector(history, window: int = 20, threshold: float = 0.1) -> bool:
    h = list(history)[-window:]
    if len(h) < window:
        return False
    if not any(f for _, _, f in h):
        return False
    pts = np.array([(x, y) for x, y, _ in h])
    diff = pts[:, None, :] - pts[None, :, :]
    return bool(np.sqrt((diff ** 2).sum(-1)).max() < threshold)
