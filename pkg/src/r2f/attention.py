"""Neighborhood-aware (key-key, Gaussian-modulated) patch attention.

Pure numpy math on synthetic patch grids. The Gaussian locality kernel
multiplies the scaled key-key logit before the softmax.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument


def _gaussian(dist_sq, sigma: float):
    return np.exp(-dist_sq / (2.0 * sigma * sigma))


def standard_sim(q_i, k_j) -> float:
    q_i = np.atleast_1d(np.asarray(q_i, dtype=np.float64))
    k_j = np.atleast_1d(np.asarray(k_j, dtype=np.float64))
    if q_i.shape != k_j.shape:
        raise InvalidArgument(f"dimension mismatch: {q_i.shape} vs {k_j.shape}")
    return float(q_i @ k_j / np.sqrt(q_i.shape[0]))


def naclip_sim(k_i, k_j, u_i, u_j, sigma: float) -> float:
    if sigma <= 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    d = np.asarray(u_i, dtype=np.float64) - np.asarray(u_j, dtype=np.float64)
    return standard_sim(k_i, k_j) * float(_gaussian(d @ d, sigma))


@dataclass(frozen=True)
class PatchGrid:
    keys: np.ndarray      # (H', W', D)
    values: np.ndarray    # (H', W', Dv)
    centers: np.ndarray   # (H', W', 2) image-plane (u, v) in pixels

    def __post_init__(self):
        k, v, c = (np.asarray(a, dtype=np.float64) for a in (self.keys, self.values, self.centers))
        if k.ndim != 3 or v.ndim != 3 or c.ndim != 3 or c.shape[2] != 2:
            raise InvalidArgument("keys/values/centers must be (H, W, *) arrays with 2D centers")
        if not (k.shape[:2] == v.shape[:2] == c.shape[:2]):
            raise InvalidArgument("keys, values and centers must share the patch grid shape")
        if k.shape[0] * k.shape[1] == 0:
            raise InvalidArgument("empty patch grid")
        if c.shape[1] > 1 and not np.all(np.diff(c[:, :, 0], axis=1) > 0):
            raise InvalidArgument("patch centers must increase along rows")
        if c.shape[0] > 1 and not np.all(np.diff(c[:, :, 1], axis=0) > 0):
            raise InvalidArgument("patch centers must increase along columns")
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "centers", c)

    @property
    def shape(self) -> tuple[int, int]:
        return self.keys.shape[:2]

    @property
    def patch_width(self) -> float:
        c = self.centers
        if c.shape[1] > 1:
            return float(c[0, 1, 0] - c[0, 0, 0])
        if c.shape[0] > 1:
            return float(c[1, 0, 1] - c[0, 0, 1])
        return 1.0

    @classmethod
    def random(cls, h: int, w: int, dim: int, value_dim: int | None = None,
               patch_size: float = 16.0, seed: int = 0) -> "PatchGrid":
        rng = np.random.default_rng(seed)
        value_dim = dim if value_dim is None else value_dim
        cols, rows = np.meshgrid(np.arange(w), np.arange(h))
        centers = np.stack([(cols + 0.5) * patch_size, (rows + 0.5) * patch_size], axis=-1)
        return cls(rng.standard_normal((h, w, dim)), rng.standard_normal((h, w, value_dim)), centers)


def attention_weights(grid: PatchGrid, sigma: float | None = None) -> np.ndarray:
    """(N, N) row-stochastic attention matrix over patches in row-major order."""
    if sigma is None:
        sigma = 2.0 * grid.patch_width
    if sigma <= 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    h, w, d = grid.keys.shape
    k = grid.keys.reshape(h * w, d)
    u = grid.centers.reshape(h * w, 2)
    logits = (k @ k.T) / np.sqrt(d)
    diff = u[:, None, :] - u[None, :, :]
    logits = logits * _gaussian(np.einsum("ijk,ijk->ij", diff, diff), sigma)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


def na_attend(grid: PatchGrid, sigma: float | None = None) -> np.ndarray:
    h, w, _ = grid.keys.shape
    weights = attention_weights(grid, sigma)
    out = weights @ grid.values.reshape(h * w, -1)
    return out.reshape(h, w, -1)


def dump_attention_csv(weights: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_patch", "key_patch", "weight"])
        for i, row in enumerate(np.asarray(weights)):
            for j, value in enumerate(row):
                writer.writerow([i, j, repr(float(value))])
