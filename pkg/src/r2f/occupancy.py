"""Log-odds voxel occupancy stored as hashed 8x8x8 blocks.

Blocks live in one growable pool array; a numba typed dict maps the packed
block coordinate to its pool slot. Integration walks every selected pixel ray
with an Amanatides-Woo traversal: traversed voxels receive free evidence, the
surface voxel of an in-range hit receives occupied evidence, and each update is
clamped before the next one is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numba
import numpy as np
from numba import types
from numba.typed import Dict, List

from .errors import InvalidArgument, ResourceLimitError

BLOCK = 8
_OFF = 1 << 20
# surface endpoints are pushed this far past the measured range so a face lying
# exactly on a voxel boundary lands in the solid voxel
_SURFACE_NUDGE = 1e-4


class CellClass(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


@numba.njit(cache=True, inline="always")
def _key(bx, by, bz):
    return ((bx + _OFF) << 42) | ((by + _OFF) << 21) | (bz + _OFF)


def unpack_key(key: int) -> tuple[int, int, int]:
    mask = (1 << 21) - 1
    return ((key >> 42) & mask) - _OFF, ((key >> 21) & mask) - _OFF, (key & mask) - _OFF


@numba.njit(cache=True)
def _traverse(origins, ends, hit, inv_vs, index, pool, new_keys, next_slot, update,
              l_free, l_occ, l_min, l_max):
    """Walk every ray. ``update`` False only allocates blocks; True applies evidence."""
    last_key = -1
    slot = -1
    for r in range(origins.shape[0]):
        o0 = origins[r, 0] * inv_vs
        o1 = origins[r, 1] * inv_vs
        o2 = origins[r, 2] * inv_vs
        e0 = ends[r, 0] * inv_vs
        e1 = ends[r, 1] * inv_vs
        e2 = ends[r, 2] * inv_vs
        ix = int(math.floor(o0))
        iy = int(math.floor(o1))
        iz = int(math.floor(o2))
        jx = int(math.floor(e0))
        jy = int(math.floor(e1))
        jz = int(math.floor(e2))
        d0 = e0 - o0
        d1 = e1 - o1
        d2 = e2 - o2
        sx = 1 if d0 > 0 else -1
        sy = 1 if d1 > 0 else -1
        sz = 1 if d2 > 0 else -1
        tx = ((ix + (1 if d0 > 0 else 0)) - o0) / d0 if d0 != 0.0 else np.inf
        ty = ((iy + (1 if d1 > 0 else 0)) - o1) / d1 if d1 != 0.0 else np.inf
        tz = ((iz + (1 if d2 > 0 else 0)) - o2) / d2 if d2 != 0.0 else np.inf
        dtx = abs(1.0 / d0) if d0 != 0.0 else np.inf
        dty = abs(1.0 / d1) if d1 != 0.0 else np.inf
        dtz = abs(1.0 / d2) if d2 != 0.0 else np.inf
        while True:
            at_end = ix == jx and iy == jy and iz == jz
            key = _key(ix >> 3, iy >> 3, iz >> 3)
            if key != last_key:
                if key in index:
                    slot = index[key]
                elif not update:
                    index[key] = next_slot
                    new_keys.append(key)
                    slot = next_slot
                    next_slot += 1
                last_key = key
            if update:
                delta = l_occ if (at_end and hit[r]) else l_free
                v = pool[slot, ix & 7, iy & 7, iz & 7] + delta
                if v < l_min:
                    v = l_min
                elif v > l_max:
                    v = l_max
                pool[slot, ix & 7, iy & 7, iz & 7] = v
            if at_end:
                break
            # step the axis with the nearest boundary among those not yet at the end
            bx = tx if ix != jx else np.inf
            by = ty if iy != jy else np.inf
            bz = tz if iz != jz else np.inf
            if bx <= by and bx <= bz:
                ix += sx
                tx += dtx
            elif by <= bz:
                iy += sy
                ty += dty
            else:
                iz += sz
                tz += dtz
    return next_slot


@numba.njit(cache=True)
def _gather(index, pool, i0, j0, k0, out):
    nx, ny, nz = out.shape
    for bx in range(i0 >> 3, ((i0 + nx - 1) >> 3) + 1):
        for by in range(j0 >> 3, ((j0 + ny - 1) >> 3) + 1):
            for bz in range(k0 >> 3, ((k0 + nz - 1) >> 3) + 1):
                key = _key(bx, by, bz)
                if key not in index:
                    continue
                slot = index[key]
                for lx in range(8):
                    gx = bx * 8 + lx - i0
                    if gx < 0 or gx >= nx:
                        continue
                    for ly in range(8):
                        gy = by * 8 + ly - j0
                        if gy < 0 or gy >= ny:
                            continue
                        for lz in range(8):
                            gz = bz * 8 + lz - k0
                            if 0 <= gz < nz:
                                out[gx, gy, gz] = pool[slot, lx, ly, lz]


@dataclass(frozen=True, eq=False)
class MapSnapshot:
    """Dense copy of a map region: per-voxel class and log-odds."""

    classes: np.ndarray      # (nx, ny, nz) int8 CellClass values
    log_odds: np.ndarray     # (nx, ny, nz)
    origin: tuple[int, int, int]   # global voxel index of element [0, 0, 0]
    voxel_size: float

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.classes.shape

    def centers(self, idx) -> np.ndarray:
        """World coordinates of voxel centres for local indices (..., 3)."""
        return (np.asarray(idx, dtype=np.float64) + np.asarray(self.origin) + 0.5) * self.voxel_size

    def local_index(self, point) -> tuple[int, int, int]:
        g = np.floor(np.asarray(point, dtype=np.float64) / self.voxel_size).astype(np.int64)
        return tuple(int(v) for v in g - np.asarray(self.origin))

    def z_range(self, z_lo: float, z_hi: float) -> tuple[int, int]:
        """Local k-index range [k0, k1) of voxels whose centre height lies in [z_lo, z_hi]."""
        kz = (np.arange(self.shape[2]) + self.origin[2] + 0.5) * self.voxel_size
        inside = np.nonzero((kz >= z_lo - 1e-9) & (kz <= z_hi + 1e-9))[0]
        if inside.size == 0:
            return 0, 0
        return int(inside[0]), int(inside[-1]) + 1


def classify_values(log_odds, tau_free: float = -0.3, tau_occ: float = 0.3) -> np.ndarray:
    l = np.asarray(log_odds)
    out = np.full(l.shape, CellClass.UNKNOWN, dtype=np.int8)
    out[l < tau_free] = CellClass.FREE
    out[l > tau_occ] = CellClass.OCCUPIED
    return out


class VoxelGrid:
    """Sparse log-odds occupancy grid; absent voxels read as 0 (unknown)."""

    def __init__(self, voxel_size: float = 0.1, l_occ: float = 0.85, l_free: float = -0.4,
                 l_min: float = -2.0, l_max: float = 3.5, tau_free: float = -0.3, tau_occ: float = 0.3,
                 snapshot_cap=(40.0, 40.0, 4.0)):
        if voxel_size <= 0:
            raise InvalidArgument("voxel_size must be positive")
        if not (l_min < 0 < l_max and l_free < 0 < l_occ and tau_free <= tau_occ):
            raise InvalidArgument("inconsistent log-odds parameters")
        self.voxel_size = float(voxel_size)
        self.l_occ, self.l_free = float(l_occ), float(l_free)
        self.l_min, self.l_max = float(l_min), float(l_max)
        self.tau_free, self.tau_occ = float(tau_free), float(tau_occ)
        self.snapshot_cap = tuple(float(c) for c in snapshot_cap)
        self._index = Dict.empty(key_type=types.int64, value_type=types.int64)
        self._pool = np.zeros((64, BLOCK, BLOCK, BLOCK))
        self._keys = np.zeros(0, dtype=np.int64)
        self.n_blocks = 0

    # ------------------------------------------------------------ updates

    def integrate_rays(self, origins, ends, hit) -> None:
        """Apply free evidence along origin->end and occupied evidence at ends where ``hit``."""
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        ends = np.ascontiguousarray(ends, dtype=np.float64).reshape(-1, 3)
        hit = np.ascontiguousarray(hit, dtype=np.bool_).reshape(-1)
        if origins.shape[0] == 0:
            return
        if not (np.all(np.isfinite(origins)) and np.all(np.isfinite(ends))):
            raise InvalidArgument("ray endpoints must be finite")
        new_keys = List.empty_list(types.int64)
        inv = 1.0 / self.voxel_size
        n = _traverse(origins, ends, hit, inv, self._index, self._pool, new_keys, self.n_blocks, False,
                      self.l_free, self.l_occ, self.l_min, self.l_max)
        if n > self._pool.shape[0]:
            grown = np.zeros((max(n, 2 * self._pool.shape[0]), BLOCK, BLOCK, BLOCK))
            grown[: self.n_blocks] = self._pool[: self.n_blocks]
            self._pool = grown
        if len(new_keys):
            self._keys = np.concatenate([self._keys, np.asarray(new_keys, dtype=np.int64)])
        self.n_blocks = n
        _traverse(origins, ends, hit, inv, self._index, self._pool, new_keys, self.n_blocks, True,
                  self.l_free, self.l_occ, self.l_min, self.l_max)

    def integrate_observation(self, obs, stride: int = 2, r_max: float | None = None) -> int:
        """Integrate every ``stride``-th pixel of ``obs``; returns the number of rays used."""
        if stride < 1:
            raise InvalidArgument("stride must be >= 1")
        r_max = obs.camera.r_max if r_max is None else r_max
        h, w = obs.depth.shape
        rows, cols = np.meshgrid(np.arange(0, h, stride), np.arange(0, w, stride), indexing="ij")
        rows, cols = rows.ravel(), cols.ravel()
        depth = obs.depth[rows, cols]
        oor = obs.oor_mask[rows, cols]
        keep = oor | (depth > 0)
        rows, cols, depth, oor = rows[keep], cols[keep], depth[keep], oor[keep]
        dirs = obs.world_rays(rows, cols)
        reach = np.where(oor, r_max - self.voxel_size, depth + _SURFACE_NUDGE)
        origin = obs.position
        ends = origin[None, :] + dirs * reach[:, None]
        origins = np.broadcast_to(origin, ends.shape)
        self.integrate_rays(origins, ends, ~oor)
        return int(rows.size)

    # ------------------------------------------------------------ queries

    def voxel_index(self, point) -> tuple[int, int, int]:
        p = np.floor(np.asarray(point, dtype=np.float64) / self.voxel_size).astype(np.int64)
        return int(p[0]), int(p[1]), int(p[2])

    def value_at_index(self, i: int, j: int, k: int) -> float:
        key = ((i >> 3) + _OFF) << 42 | ((j >> 3) + _OFF) << 21 | ((k >> 3) + _OFF)
        slot = self._index.get(key, -1)
        if slot < 0:
            return 0.0
        return float(self._pool[slot, i & 7, j & 7, k & 7])

    def log_odds(self, point) -> float:
        return self.value_at_index(*self.voxel_index(point))

    def classify(self, point) -> CellClass:
        return self.classify_value(self.log_odds(point))

    def classify_value(self, l: float) -> CellClass:
        if l < self.tau_free:
            return CellClass.FREE
        if l > self.tau_occ:
            return CellClass.OCCUPIED
        return CellClass.UNKNOWN

    @property
    def blocks(self) -> dict[tuple[int, int, int], np.ndarray]:
        """Read-only views of allocated blocks keyed by block coordinate."""
        out = {}
        for slot, key in enumerate(self._keys):
            v = self._pool[slot].view()
            v.setflags(write=False)
            out[unpack_key(int(key))] = v
        return out

    def index_bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Inclusive-exclusive global voxel index range covered by allocated blocks."""
        if self.n_blocks == 0:
            return None
        coords = np.array([unpack_key(int(k)) for k in self._keys])
        return coords.min(axis=0) * BLOCK, (coords.max(axis=0) + 1) * BLOCK

    def snapshot_indices(self, lo_idx, hi_idx) -> MapSnapshot:
        """Snapshot of voxel indices lo_idx <= idx < hi_idx."""
        lo_idx = np.asarray(lo_idx, dtype=np.int64)
        hi_idx = np.asarray(hi_idx, dtype=np.int64)
        shape = hi_idx - lo_idx
        if np.any(shape <= 0):
            raise InvalidArgument("empty snapshot box")
        extent = shape * self.voxel_size
        if np.any(extent > np.asarray(self.snapshot_cap) + 1e-9):
            raise ResourceLimitError(f"snapshot extent {tuple(extent)} m exceeds cap {self.snapshot_cap}")
        vals = np.zeros(tuple(int(s) for s in shape))
        if self.n_blocks:
            _gather(self._index, self._pool, int(lo_idx[0]), int(lo_idx[1]), int(lo_idx[2]), vals)
        return MapSnapshot(classify_values(vals, self.tau_free, self.tau_occ), vals,
                           tuple(int(v) for v in lo_idx), self.voxel_size)

    def snapshot_region(self, lo, hi) -> MapSnapshot:
        """Dense classification of every voxel intersecting the box [lo, hi] (metres)."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if np.any(hi <= lo):
            raise InvalidArgument("snapshot box must have positive extent")
        if np.any(hi - lo > np.asarray(self.snapshot_cap) + 1e-9):
            raise ResourceLimitError(f"snapshot box {tuple(hi - lo)} m exceeds cap {self.snapshot_cap}")
        lo_idx = np.floor(lo / self.voxel_size).astype(np.int64)
        hi_idx = np.ceil(hi / self.voxel_size).astype(np.int64)
        hi_idx = np.maximum(hi_idx, lo_idx + 1)
        return self.snapshot_indices(lo_idx, hi_idx)

    def nonzero_voxels(self) -> np.ndarray:
        """(N, 4) rows of voxel-centre x, y, z and log-odds for every nonzero voxel."""
        rows = []
        for slot in range(self.n_blocks):
            bx, by, bz = unpack_key(int(self._keys[slot]))
            lx, ly, lz = np.nonzero(self._pool[slot])
            if lx.size == 0:
                continue
            idx = np.stack([bx * BLOCK + lx, by * BLOCK + ly, bz * BLOCK + lz], axis=1)
            c = (idx + 0.5) * self.voxel_size
            rows.append(np.column_stack([c, self._pool[slot][lx, ly, lz]]))
        if not rows:
            return np.zeros((0, 4))
        return np.concatenate(rows)


def integrate_observation(grid: VoxelGrid, obs, cam=None, stride: int = 2) -> VoxelGrid:
    grid.integrate_observation(obs, stride, None if cam is None else cam.r_max)
    return grid


def classify(grid: VoxelGrid, point) -> CellClass:
    return grid.classify(point)


def snapshot_region(grid: VoxelGrid, lo, hi) -> MapSnapshot:
    return grid.snapshot_region(lo, hi)
