"""Out-of-range semantic rays: selection, association to frontier regions, binning."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument
from .frontiers import BinAccumulator, FrontierRegion

N_AZIMUTH = 12
N_ELEVATION = 6


@dataclass(frozen=True, eq=False)
class SemanticRay:
    origin: np.ndarray
    direction: np.ndarray
    feature: np.ndarray


class BinIndex(NamedTuple):
    azimuth: int
    elevation: int


def erode_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return np.asarray(mask, dtype=bool).copy()
    size = 2 * radius + 1
    return ndimage.binary_erosion(mask, structure=np.ones((size, size), dtype=bool), border_value=0)


def subsample(n: int, max_rays: int) -> np.ndarray:
    """Evenly strided positions into a list of ``n`` items, at most ``max_rays`` of them."""
    if max_rays < 1:
        raise InvalidArgument("max_rays must be >= 1")
    if n <= max_rays:
        return np.arange(n)
    return (np.arange(max_rays) * n) // max_rays


def oor_ray_arrays(obs, max_rays: int = 64, erosion_radius: int = 2):
    """Origin (3,), directions (M, 3), features (M, D) and pixel (rows, cols) of the selected rays."""
    if max_rays < 1:
        raise InvalidArgument("max_rays must be >= 1")
    mask = erode_mask(obs.oor_mask, erosion_radius)
    flat = np.flatnonzero(mask)
    flat = flat[subsample(flat.size, max_rays)]
    rows, cols = np.divmod(flat, obs.oor_mask.shape[1])
    dirs = obs.world_rays(rows, cols)
    feats = obs.features_at(rows, cols) if flat.size else np.zeros((0, obs.palette.shape[1]))
    return obs.position, dirs, feats, (rows, cols)


def select_oor_rays(obs, max_rays: int = 64, erosion_radius: int = 2) -> list[SemanticRay]:
    origin, dirs, feats, _ = oor_ray_arrays(obs, max_rays, erosion_radius)
    return [SemanticRay(origin.copy(), d, f) for d, f in zip(dirs, feats)]


def association_costs(origin, directions, centroids, tau_perp: float = 1.0, tau_r: float = 14.0,
                      perp_weight: float = 1.0, radial_weight: float = 1.0) -> np.ndarray:
    """(M, R) normalised costs; inf where a region fails a compatibility test."""
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    c = np.asarray(centroids, dtype=np.float64).reshape(-1, 3)
    v = c - np.asarray(origin, dtype=np.float64)[None, :]          # (R, 3)
    along = d @ v.T                                                  # (M, R)
    vnorm = np.linalg.norm(v, axis=1)[None, :]
    perp = np.linalg.norm(v[None, :, :] - along[:, :, None] * d[:, None, :], axis=2)
    ok = (along > 0) & (perp < tau_perp) & (vnorm < tau_r)
    cost = perp_weight * perp / tau_perp + radial_weight * vnorm / tau_r
    return np.where(ok, cost, np.inf)


def associate_rays(origin, directions, regions: Sequence[FrontierRegion], tau_perp: float = 1.0,
                   tau_r: float = 14.0, perp_weight: float = 1.0, radial_weight: float = 1.0) -> list:
    """Region id (or None) for each ray; invalidated regions never qualify; ties go to the lower id."""
    regions = [r for r in regions if not r.invalidated]
    m = np.asarray(directions).reshape(-1, 3).shape[0]
    if not regions or m == 0:
        return [None] * m
    regions = sorted(regions, key=lambda r: r.id)
    cost = association_costs(origin, directions, [r.centroid for r in regions], tau_perp, tau_r,
                              perp_weight, radial_weight)
    best = np.argmin(cost, axis=1)    # first minimum, i.e. the lower id on ties
    out = []
    for i, k in enumerate(best):
        out.append(regions[k].id if np.isfinite(cost[i, k]) else None)
    return out


def associate_ray(ray: SemanticRay, regions: Sequence[FrontierRegion], tau_perp: float = 1.0, tau_r: float = 14.0,
                  perp_weight: float = 1.0, radial_weight: float = 1.0):
    return associate_rays(ray.origin, ray.direction[None, :], regions, tau_perp, tau_r,
                          perp_weight, radial_weight)[0]


def bin_of(direction, bin_size_deg: float = 30.0) -> BinIndex:
    d = np.asarray(direction, dtype=np.float64)
    n_az = int(round(360.0 / bin_size_deg))
    n_el = int(round(180.0 / bin_size_deg))
    az = math.degrees(math.atan2(d[1], d[0])) % 360.0
    el = math.degrees(math.asin(max(-1.0, min(1.0, d[2]))))
    a = min(int(az // bin_size_deg), n_az - 1)
    e = min(int((el + 90.0) // bin_size_deg), n_el - 1)
    return BinIndex(a, e)


def accumulate(region: FrontierRegion, b, feature, weight: float = 1.0) -> FrontierRegion:
    if not weight > 0:
        raise InvalidArgument(f"weight must be positive, got {weight}")
    key = tuple(int(v) for v in b)
    f = np.asarray(feature, dtype=np.float64)
    acc = region.bins.get(key)
    if acc is None:
        region.bins[key] = BinAccumulator(weight * f, float(weight))
    else:
        acc.sum = acc.sum + weight * f
        acc.weight += float(weight)
    return region


def accumulate_observation(obs, regions: Sequence[FrontierRegion], max_rays: int = 64, erosion_radius: int = 2,
                           tau_perp: float = 1.0, tau_r: float = 14.0, perp_weight: float = 1.0,
                           radial_weight: float = 1.0, bin_size_deg: float = 30.0) -> list[tuple]:
    """Select, associate and accumulate one frame's rays; returns (region id, bin) per associated ray."""
    origin, dirs, feats, _ = oor_ray_arrays(obs, max_rays, erosion_radius)
    if dirs.shape[0] == 0 or not regions:
        return []
    ids = associate_rays(origin, dirs, regions, tau_perp, tau_r, perp_weight, radial_weight)
    by_id = {r.id: r for r in regions}
    log = []
    for d, f, rid in zip(dirs, feats, ids):
        if rid is None:
            continue
        b = bin_of(d, bin_size_deg)
        accumulate(by_id[rid], b, f, 1.0)
        log.append((rid, b))
    return log
