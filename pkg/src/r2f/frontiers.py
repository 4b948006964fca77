"""Frontier voxels, their clustering into regions, and region synchronisation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.cluster.hierarchy import DisjointSet
from scipy.spatial import cKDTree

from .errors import InvalidArgument
from .occupancy import CellClass, MapSnapshot

_NEIGHBOURS6 = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


@dataclass
class BinAccumulator:
    sum: np.ndarray
    weight: float

    def feature(self) -> np.ndarray:
        """Weighted-average feature, renormalised to unit length."""
        n = np.linalg.norm(self.sum)
        if n == 0.0:
            return np.zeros_like(self.sum)
        return self.sum / n

    def copy(self) -> "BinAccumulator":
        return BinAccumulator(self.sum.copy(), self.weight)


@dataclass
class FrontierRegion:
    id: int
    centroid: np.ndarray                 # metres
    voxels: np.ndarray                   # (N, 3) global voxel indices
    bins: dict = field(default_factory=dict)   # (azimuth bin, elevation bin) -> BinAccumulator
    invalidated: bool = False
    last_sync_step: int = 0

    @property
    def size(self) -> int:
        return int(self.voxels.shape[0])

    def bin_feature(self, b) -> np.ndarray:
        return self.bins[tuple(b)].feature()

    @property
    def total_weight(self) -> float:
        return float(sum(acc.weight for acc in self.bins.values()))


def _as_snapshot(cells, voxel_size: float = 0.1, origin=(0, 0, 0)) -> MapSnapshot:
    if isinstance(cells, MapSnapshot):
        return cells
    arr = np.asarray(cells, dtype=np.int8)
    if arr.ndim != 3:
        raise InvalidArgument("classification snapshot must be a 3D array")
    return MapSnapshot(arr, np.zeros(arr.shape), tuple(int(v) for v in origin), float(voxel_size))


def neighbour_counts(classes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel counts of Unknown and Free 6-neighbours; outside the array counts as Unknown."""
    pad = np.pad(classes, 1, mode="constant", constant_values=CellClass.UNKNOWN)
    nx, ny, nz = classes.shape
    unknown = np.zeros(classes.shape, dtype=np.int8)
    free = np.zeros(classes.shape, dtype=np.int8)
    for dx, dy, dz in _NEIGHBOURS6:
        nb = pad[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny, 1 + dz:1 + dz + nz]
        unknown += nb == CellClass.UNKNOWN
        free += nb == CellClass.FREE
    return unknown, free


def extract_frontiers(cells, z_min: float, z_max: float, k_u: int = 3, k_f: int = 1,
                      voxel_size: float = 0.1, origin=(0, 0, 0)) -> np.ndarray:
    """(N, 3) global indices of Free voxels in the height band bordering Unknown space.

    ``cells`` is a MapSnapshot or a bare class array (then ``voxel_size`` and
    ``origin`` place it in the world). Output rows are lexicographically sorted.
    """
    snap = _as_snapshot(cells, voxel_size, origin)
    classes = snap.classes
    if classes.size == 0:
        raise InvalidArgument("snapshot must be non-empty")
    unknown, free = neighbour_counts(classes)
    z = (np.arange(classes.shape[2]) + snap.origin[2] + 0.5) * snap.voxel_size
    band = (z >= z_min - 1e-9) & (z <= z_max + 1e-9)
    mask = (classes == CellClass.FREE) & band[None, None, :] & (unknown >= k_u) & (free >= k_f)
    idx = np.argwhere(mask)
    return idx + np.asarray(snap.origin, dtype=np.int64)


def cluster_regions(voxels, merge_radius: float = 0.8, voxel_size: float = 0.1) -> list[FrontierRegion]:
    """26-connected components, merged transitively when centroids lie within ``merge_radius``.

    Region ids follow ascending lexicographic centroid order.
    """
    vox = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if vox.shape[0] == 0:
        return []
    lo = vox.min(axis=0)
    dense = np.zeros(tuple(vox.max(axis=0) - lo + 1), dtype=bool)
    local = vox - lo
    dense[local[:, 0], local[:, 1], local[:, 2]] = True
    labels, n = ndimage.label(dense, structure=np.ones((3, 3, 3), dtype=bool))
    comp = labels[local[:, 0], local[:, 1], local[:, 2]] - 1
    centers = (vox + 0.5) * voxel_size
    counts = np.bincount(comp, minlength=n).astype(np.float64)
    centroids = np.stack([np.bincount(comp, weights=centers[:, a], minlength=n) for a in range(3)], axis=1)
    centroids /= counts[:, None]

    ds = DisjointSet(range(n))
    if n > 1:
        for a, b in sorted(cKDTree(centroids).query_pairs(merge_radius + 1e-12)):
            ds.merge(a, b)
    groups: dict[int, list[int]] = {}
    for c in range(n):
        groups.setdefault(ds[c], []).append(c)
    merged = []
    for members in groups.values():
        sel = np.isin(comp, members)
        pts = vox[sel]
        merged.append((centers[sel].mean(axis=0), pts[np.lexsort(pts.T[::-1])]))
    merged.sort(key=lambda m: tuple(m[0]))
    return [FrontierRegion(i, c, v) for i, (c, v) in enumerate(merged)]


def sync_regions(old, fresh, merge_radius: float = 0.8, invalidated_points=(), invalidation_radius: float = 1.0,
                 step: int = 0) -> list[FrontierRegion]:
    """Carry semantic accumulators from ``old`` regions into ``fresh`` ones.

    Every fresh region sums (bin-wise) the accumulators of every old region whose
    centroid lies within ``merge_radius`` of its own; a split duplicates mass.
    """
    old = list(old)
    inv = np.asarray(list(invalidated_points), dtype=np.float64).reshape(-1, 3)
    old_c = np.array([r.centroid for r in old]).reshape(-1, 3)
    out = []
    for f in fresh:
        bins: dict = {}
        if old:
            near = np.nonzero(np.linalg.norm(old_c - f.centroid, axis=1) <= merge_radius)[0]
            for k in near:
                for b, acc in old[k].bins.items():
                    cur = bins.get(b)
                    if cur is None:
                        bins[b] = acc.copy()
                    else:
                        cur.sum = cur.sum + acc.sum
                        cur.weight += acc.weight
        invalid = bool(inv.shape[0] and np.any(np.linalg.norm(inv - f.centroid, axis=1) <= invalidation_radius))
        out.append(FrontierRegion(f.id, np.array(f.centroid, dtype=np.float64), f.voxels, bins, invalid, step))
    return out


def compute_regions(snapshot: MapSnapshot, z_min: float, z_max: float, k_u: int = 3, k_f: int = 1,
                    merge_radius: float = 0.8) -> list[FrontierRegion]:
    vox = extract_frontiers(snapshot, z_min, z_max, k_u, k_f)
    return cluster_regions(vox, merge_radius, snapshot.voxel_size)
