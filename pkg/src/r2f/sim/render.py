"""Posed depth + feature rendering of box scenes.

Every pixel in an image column shares one horizontal direction (the camera has
no pitch or roll), so the kernel intersects each column's 2D ray with the box
footprints once and then resolves the vertical extent per row.

Features are stored compactly: a palette of concept embeddings, a per-pixel
palette index, and a rank-k Gaussian noise term (basis @ coefficients). The
full H x W x D map is only materialised on request.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from ..embedding import fnv1a_64
from ..errors import RenderError
from .camera import AgentState, CameraModel
from .scene import SceneSpec

NOISE_RANK = 8


@numba.njit(cache=True)
def _cast_columns(cx, cy, cz, cos_yaw, sin_yaw, a, b, lo, hi, floor_z, ceil_z, bounds,
                  out_s, out_code):
    m = lo.shape[0]
    width = a.shape[0]
    height = b.shape[0]
    enter = np.empty(m)
    exit_ = np.empty(m)
    order = np.empty(m, dtype=np.int64)
    for u in range(width):
        nh = math.sqrt(1.0 + a[u] * a[u])
        hx = (cos_yaw - sin_yaw * a[u]) / nh
        hy = (sin_yaw + cos_yaw * a[u]) / nh
        # exit distance from the scene bounds
        sb = np.inf
        if hx > 0:
            sb = min(sb, (bounds[2] - cx) / hx)
        elif hx < 0:
            sb = min(sb, (bounds[0] - cx) / hx)
        if hy > 0:
            sb = min(sb, (bounds[3] - cy) / hy)
        elif hy < 0:
            sb = min(sb, (bounds[1] - cy) / hy)
        n = 0
        for j in range(m):
            t0 = -np.inf
            t1 = np.inf
            ok = True
            if hx != 0.0:
                ta = (lo[j, 0] - cx) / hx
                tb = (hi[j, 0] - cx) / hx
                if ta > tb:
                    ta, tb = tb, ta
                t0 = max(t0, ta)
                t1 = min(t1, tb)
            elif cx < lo[j, 0] or cx > hi[j, 0]:
                ok = False
            if hy != 0.0:
                ta = (lo[j, 1] - cy) / hy
                tb = (hi[j, 1] - cy) / hy
                if ta > tb:
                    ta, tb = tb, ta
                t0 = max(t0, ta)
                t1 = min(t1, tb)
            elif cy < lo[j, 1] or cy > hi[j, 1]:
                ok = False
            if ok and t1 > max(t0, 0.0) and t1 > 0.0:
                # insertion sort by entry distance
                e = max(t0, 0.0)
                k = n
                while k > 0 and enter[k - 1] > e:
                    enter[k] = enter[k - 1]
                    exit_[k] = exit_[k - 1]
                    order[k] = order[k - 1]
                    k -= 1
                enter[k] = e
                exit_[k] = t1
                order[k] = j
                n += 1
        for v in range(height):
            k = b[v] / nh
            best = np.inf
            code = m + 2  # void
            if k < 0.0:
                best = (floor_z - cz) / k
                code = m
            elif k > 0.0:
                best = (ceil_z - cz) / k
                code = m + 1
            if sb < best:
                best = sb
                code = m + 2
            for i in range(n):
                sa = enter[i]
                if sa >= best:
                    break
                sbx = min(exit_[i], best)
                j = order[i]
                z0 = lo[j, 2]
                z1 = hi[j, 2]
                if k == 0.0:
                    if z0 <= cz <= z1:
                        best = sa
                        code = j
                    continue
                if k > 0.0:
                    s_lo = max(sa, (z0 - cz) / k)
                    s_hi = min(sbx, (z1 - cz) / k)
                else:
                    s_lo = max(sa, (z1 - cz) / k)
                    s_hi = min(sbx, (z0 - cz) / k)
                if s_lo <= s_hi and s_lo < best:
                    best = s_lo
                    code = j
            if code == m + 2:
                out_s[v, u] = np.inf
            else:
                out_s[v, u] = best * math.sqrt(1.0 + k * k)
            out_code[v, u] = code


@dataclass(frozen=True, eq=False)
class Observation:
    depth: np.ndarray            # (H, W) metres along the pixel ray, clipped at r_max
    oor_mask: np.ndarray         # (H, W) true where the surface is at or beyond r_max
    labels: np.ndarray           # (H, W) palette index of the first surface hit
    palette: np.ndarray          # (K, D) unit concept embeddings
    palette_names: tuple[str, ...]
    noise_basis: np.ndarray      # (D, r) scaled noise basis
    noise_coeffs: np.ndarray     # (H, W, r) per-pixel noise coefficients
    pose: AgentState
    camera: CameraModel
    floor_height: float = 0.0
    surface_range: np.ndarray | None = None   # simulator ground truth, not used by agents

    @property
    def position(self) -> np.ndarray:
        return self.pose.camera_position(self.floor_height)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @cached_property
    def _norms(self) -> np.ndarray:
        if not np.any(self.noise_coeffs):
            return np.ones(self.depth.shape)
        bt_p = self.noise_basis.T @ self.palette.T               # (r, K)
        bt_b = self.noise_basis.T @ self.noise_basis             # (r, r)
        z = self.noise_coeffs
        cross = np.einsum("hwr,rhw->hw", z, bt_p[:, self.labels])
        quad = np.einsum("hwr,rs,hws->hw", z, bt_b, z)
        return np.sqrt(1.0 + 2.0 * cross + quad)

    def similarity(self, query) -> np.ndarray:
        """(H, W) cosine between every pixel feature and ``query``."""
        q = np.asarray(query, dtype=np.float64)
        q = q / np.linalg.norm(q)
        base = (self.palette @ q)[self.labels]
        if np.any(self.noise_coeffs):
            base = base + self.noise_coeffs @ (self.noise_basis.T @ q)
        return base / self._norms

    def similarity_max(self, queries) -> np.ndarray:
        """Per-query maximum cosine over the frame, for a (M, D) stack of queries."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, self.palette.shape[1])
        q = q / np.linalg.norm(q, axis=1, keepdims=True)
        base = (self.palette @ q.T)[self.labels]                     # (H, W, M)
        if np.any(self.noise_coeffs):
            base = base + self.noise_coeffs @ (self.noise_basis.T @ q.T)
        return (base / self._norms[..., None]).max(axis=(0, 1))

    def features_at(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        f = self.palette[self.labels[rows, cols]] + self.noise_coeffs[rows, cols] @ self.noise_basis.T
        return f / np.linalg.norm(f, axis=-1, keepdims=True)

    @cached_property
    def features(self) -> np.ndarray:
        """Materialised (H, W, D) unit feature map."""
        h, w = self.depth.shape
        rows, cols = np.divmod(np.arange(h * w), w)
        return self.features_at(rows, cols).reshape(h, w, -1)

    def world_rays(self, rows=None, cols=None) -> np.ndarray:
        return self.camera.world_rays(self.pose.yaw, rows, cols)


class _SceneGeometry:
    """Packed arrays for the kernel, cached per scene object."""

    def __init__(self, scene: SceneSpec):
        solids = scene.solids
        self.lo = np.array([b.lo for b, _, _ in solids], dtype=np.float64).reshape(-1, 3)
        self.hi = np.array([b.hi for b, _, _ in solids], dtype=np.float64).reshape(-1, 3)
        names = [c for _, c, _ in solids] + ["floor", "ceiling", "void"]
        self.palette_names = tuple(dict.fromkeys(names))
        index = {n: i for i, n in enumerate(self.palette_names)}
        self.code_to_palette = np.array([index[n] for n in names], dtype=np.int16)
        self.palette = np.stack([scene.registry.visual(n) for n in self.palette_names])
        self.bounds2d = np.array([scene.bounds.lo[0], scene.bounds.lo[1],
                                  scene.bounds.hi[0], scene.bounds.hi[1]])
        self.footprints = scene.footprints
        reg = scene.registry
        rng = np.random.default_rng(fnv1a_64("noise-basis") ^ reg.seed)
        self.noise_basis = rng.standard_normal((reg.dimension, NOISE_RANK))


def _geometry(scene: SceneSpec) -> _SceneGeometry:
    geo = scene.__dict__.get("_render_geometry")
    if geo is None:
        geo = _SceneGeometry(scene)
        scene.__dict__["_render_geometry"] = geo
    return geo


def point_in_solid(scene: SceneSpec, x: float, y: float) -> bool:
    fp = _geometry(scene).footprints
    return bool(np.any((fp[:, 0] < x) & (x < fp[:, 2]) & (fp[:, 1] < y) & (y < fp[:, 3])))


def cast_rays(scene: SceneSpec, state: AgentState, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth (range, palette index) images; range is inf where nothing is hit."""
    geo = _geometry(scene)
    a, b = cam.slopes
    yaw = math.radians(state.yaw)
    out_s = np.empty((cam.height, cam.width))
    out_code = np.empty((cam.height, cam.width), dtype=np.int64)
    cz = scene.floor_height + state.height
    _cast_columns(float(state.x), float(state.y), cz, math.cos(yaw), math.sin(yaw), a, b,
                  geo.lo, geo.hi, scene.floor_height, scene.ceiling_height, geo.bounds2d, out_s, out_code)
    return out_s, geo.code_to_palette[out_code]


def render(scene: SceneSpec, state: AgentState, cam: CameraModel, noise_sigma: float = 0.0,
           seed=0, feature_override: str | None = None) -> Observation:
    """Render depth, out-of-range mask and per-pixel features from ``state``.

    ``seed`` keys the feature noise (an int or a numpy Generator).
    ``feature_override`` replaces every pixel feature with one concept, noise-free.
    """
    if not scene.bounds.contains((state.x, state.y)) or point_in_solid(scene, state.x, state.y):
        raise RenderError(f"agent at ({state.x:.3f}, {state.y:.3f}) is inside solid geometry")
    geo = _geometry(scene)
    rng_range, labels = cast_rays(scene, state, cam)
    depth = np.minimum(rng_range, cam.r_max)
    oor = rng_range >= cam.r_max
    rank = NOISE_RANK
    if feature_override is not None:
        palette = scene.registry.visual(feature_override)[None, :]
        names = (feature_override,)
        labels = np.zeros_like(labels)
        coeffs = np.zeros(labels.shape + (rank,))
    else:
        palette = geo.palette
        names = geo.palette_names
        if noise_sigma > 0:
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            coeffs = rng.standard_normal(labels.shape + (rank,))
        else:
            coeffs = np.zeros(labels.shape + (rank,))
    d = palette.shape[1]
    basis = geo.noise_basis * (noise_sigma / math.sqrt(rank * d))
    return Observation(depth=depth, oor_mask=oor, labels=labels, palette=palette, palette_names=names,
                       noise_basis=basis, noise_coeffs=coeffs, pose=state, camera=cam,
                       floor_height=scene.floor_height, surface_range=rng_range)
