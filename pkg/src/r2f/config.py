"""Run configuration. Defaults follow the published hyperparameters where they exist."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError


@dataclass(frozen=True)
class R2FConfig:
    # embedding space
    dimension: int = 512
    match_cos: float = 0.18
    synonym_cos: float = 0.7

    # simulator / sensing
    width: int = 160
    height: int = 120
    hfov: float = 90.0
    r_max: float = 3.5
    camera_height: float = 1.25
    noise_sigma: float = 0.05
    forward_step: float = 0.25
    turn_step: float = 15.0
    agent_radius: float = 0.2

    # occupancy
    voxel_size: float = 0.1
    l_occ: float = 0.85
    l_free: float = -0.4
    l_min: float = -2.0
    l_max: float = 3.5
    tau_free: float = -0.3
    tau_occ: float = 0.3
    integration_stride: int = 2

    # frontiers
    k_u: int = 3
    k_f: int = 1
    band_low: float = 0.2
    band_high: float = 1.5
    merge_radius: float = 0.8

    # semantic rays
    tau_perp: float = 1.0
    tau_r: float = 14.0
    bin_size_deg: float = 30.0
    erosion_radius: int = 2
    max_rays: int = 64
    perp_cost_weight: float = 1.0
    radial_cost_weight: float = 1.0

    # policy
    tau_g: float = 0.14
    n_cons: int = 3
    n_map: int = 5
    invalidation_radius: float = 1.0
    visited_filter: float = 2.0
    delta: float = 1.5
    t_max: int = 1000
    approach_stop: float = 1.0
    replan_interval: int = 25
    stall_window: int = 20
    unknown_cost: float = 1.5
    goal_projection_radius: float = 2.0
    initial_spin: bool = True

    # R2F-VLN
    n_confirm: int = 3
    tau_l: float = 0.11
    tau_syn: float = 0.60
    k_syn: int = 5
    sweep_turns: int = 24
    landmark_verification: bool = True

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                continue
            if f.name in ("l_free", "l_min", "tau_free"):
                if value >= 0:
                    raise ConfigurationError(f"{f.name} must be negative, got {value}")
            elif f.name in ("perp_cost_weight", "radial_cost_weight", "noise_sigma"):
                if value < 0:
                    raise ConfigurationError(f"{f.name} must be non-negative, got {value}")
            elif value <= 0:
                raise ConfigurationError(f"{f.name} must be positive, got {value}")
        if not 0 < self.hfov < 180:
            raise ConfigurationError("hfov must lie in (0, 180)")
        if self.tau_free > self.tau_occ:
            raise ConfigurationError("tau_free must not exceed tau_occ")

    def replace(self, **changes) -> "R2FConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "R2FConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "R2FConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
