"""Agent pose and pinhole camera model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import InvalidArgument


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    yaw: float = 0.0          # degrees, counter-clockwise from +x
    height: float = 1.25      # camera height above the floor

    def __post_init__(self):
        object.__setattr__(self, "yaw", float(self.yaw) % 360.0)

    @property
    def planar(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def camera_position(self, floor_height: float = 0.0) -> np.ndarray:
        return np.array([self.x, self.y, floor_height + self.height])


@dataclass(frozen=True)
class CameraModel:
    width: int = 160
    height: int = 120
    hfov: float = 90.0
    r_max: float = 3.5

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("image size must be positive")
        if not 0.0 < self.hfov < 180.0:
            raise InvalidArgument(f"hfov must lie in (0, 180), got {self.hfov}")
        if self.r_max <= 0:
            raise InvalidArgument("r_max must be positive")

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.hfov) / 2.0)

    @cached_property
    def slopes(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-column lateral slope (left positive) and per-row vertical slope (up positive)."""
        f = self.focal
        a = ((self.width / 2.0) - (np.arange(self.width) + 0.5)) / f
        b = ((self.height / 2.0) - (np.arange(self.height) + 0.5)) / f
        a.setflags(write=False)
        b.setflags(write=False)
        return a, b

    @cached_property
    def camera_rays(self) -> np.ndarray:
        """(H, W, 3) unit ray directions in the camera frame (forward, left, up)."""
        a, b = self.slopes
        d = np.empty((self.height, self.width, 3))
        d[..., 0] = 1.0
        d[..., 1] = a[None, :]
        d[..., 2] = b[:, None]
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        d.setflags(write=False)
        return d

    def world_rays(self, yaw_deg: float, rows=None, cols=None) -> np.ndarray:
        """World-frame unit directions for all pixels, or for the given pixel indices."""
        d = self.camera_rays if rows is None else self.camera_rays[rows, cols]
        c, s = math.cos(math.radians(yaw_deg)), math.sin(math.radians(yaw_deg))
        out = np.empty(d.shape)
        out[..., 0] = c * d[..., 0] - s * d[..., 1]
        out[..., 1] = s * d[..., 0] + c * d[..., 1]
        out[..., 2] = d[..., 2]
        return out

    def project(self, point_cam) -> tuple[float, float]:
        """Pixel (col, row) coordinates of a camera-frame point (forward, left, up)."""
        fwd, left, up = point_cam
        if fwd <= 0:
            raise InvalidArgument("point behind the camera")
        f = self.focal
        return self.width / 2.0 - f * left / fwd, self.height / 2.0 - f * up / fwd
