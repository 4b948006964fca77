"""Slow, obviously-correct reference implementations used by the tests."""
from __future__ import annotations

import math

import numpy as np

UNKNOWN, FREE, OCCUPIED = 0, 1, 2


def frontier_oracle(classes, z_centers, z_min, z_max, k_u, k_f):
    """Set of local (i, j, k) frontier voxels by explicit neighbour counting."""
    nx, ny, nz = classes.shape
    out = set()
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if classes[i, j, k] != FREE or not (z_min <= z_centers[k] <= z_max):
                    continue
                n_unknown = n_free = 0
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    a, b, c = i + di, j + dj, k + dk
                    if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                        v = classes[a, b, c]
                    else:
                        v = UNKNOWN
                    n_unknown += v == UNKNOWN
                    n_free += v == FREE
                if n_unknown >= k_u and n_free >= k_f:
                    out.add((i, j, k))
    return out


def association_oracle(origin, direction, regions, tau_perp, tau_r):
    """Region id chosen by filtering on the three constraints, then the smallest cost, then the lowest id."""
    best = None
    for r in sorted(regions, key=lambda r: r.id):
        if r.invalidated:
            continue
        v = [float(r.centroid[a] - origin[a]) for a in range(3)]
        along = sum(direction[a] * v[a] for a in range(3))
        if along <= 0:
            continue
        perp = math.sqrt(sum((v[a] - along * direction[a]) ** 2 for a in range(3)))
        dist = math.sqrt(sum(x * x for x in v))
        if perp >= tau_perp or dist >= tau_r:
            continue
        cost = perp / tau_perp + dist / tau_r
        if best is None or cost < best[0]:
            best = (cost, r.id)
    return None if best is None else best[1]


def naive_attention(keys, values, centers, sigma):
    """Per-patch softmax over key-key logits times a Gaussian of centre distance, by explicit loops."""
    h, w, d = keys.shape
    n = h * w
    k = keys.reshape(n, d)
    v = values.reshape(n, -1)
    u = centers.reshape(n, 2)
    out = np.zeros_like(v)
    for i in range(n):
        logits = []
        for j in range(n):
            dot = sum(float(k[i, a]) * float(k[j, a]) for a in range(d)) / math.sqrt(d)
            dist2 = (u[i, 0] - u[j, 0]) ** 2 + (u[i, 1] - u[j, 1]) ** 2
            logits.append(dot * math.exp(-dist2 / (2 * sigma * sigma)))
        m = max(logits)
        ex = [math.exp(l - m) for l in logits]
        z = sum(ex)
        for j in range(n):
            out[i] += ex[j] / z * v[j]
    return out.reshape(h, w, -1)


def voxels_on_segment(p0, p1, voxel_size, step=0.002):
    """Voxel indices touched by a segment, found by dense point sampling."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n = max(int(np.linalg.norm(p1 - p0) / step), 1)
    t = np.linspace(0.0, 1.0, n + 1)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    return {tuple(v) for v in np.floor(pts / voxel_size).astype(np.int64)}


def bfs_geodesic(free, cell, start, goal):
    """8-connected Dijkstra without corner cutting, as a plain heap loop."""
    import heapq

    nx, ny = free.shape
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, (i, j) = heapq.heappop(heap)
        if (i, j) == goal:
            return d
        if d > dist[(i, j)]:
            continue
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == dj == 0:
                    continue
                a, b = i + di, j + dj
                if not (0 <= a < nx and 0 <= b < ny and free[a, b]):
                    continue
                if di and dj and not (free[i + di, j] and free[i, j + dj]):
                    continue
                nd = d + cell * (math.sqrt(2) if di and dj else 1.0)
                if nd < dist.get((a, b), math.inf):
                    dist[(a, b)] = nd
                    heapq.heappush(heap, (nd, (a, b)))
    return math.inf
