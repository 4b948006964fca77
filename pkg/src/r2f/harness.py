"""Episode orchestration, success evaluation, metrics and batch running."""
from __future__ import annotations

import json
import math
import time
import traceback
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import R2FConfig
from .errors import ConfigurationError, InvalidArgument
from .frontiers import compute_regions, sync_regions
from .occupancy import VoxelGrid
from .policy import Policy
from .rays import accumulate_observation
from .sim import AgentState, CameraModel, SceneSpec, geodesic_to_set, render, step
from .sim.kinematics import Action
from .vln import prepare_instruction, vln_policy

# purposes that key the per-step random streams
PURPOSE_RENDER = 1


class Outcome(str, Enum):
    STOPPED_AT_GOAL = "stopped_at_goal"
    STOPPED_WRONG = "stopped_wrong"
    BUDGET_EXHAUSTED = "budget_exhausted"
    EXPLORATION_EXHAUSTED = "exploration_exhausted"


@dataclass(frozen=True)
class EpisodeSpec:
    scene: SceneSpec | str            # scene object or path to a scene JSON file
    start: tuple[float, float, float]  # x, y, yaw (deg)
    mode: str                          # "objectnav" or "vln"
    query: str                         # object category or instruction
    seed: int = 0
    policy: str = "r2f"                # "r2f" or "nearest"
    feature_override: str | None = None
    episode_id: str = ""

    def load_scene(self) -> SceneSpec:
        return self.scene if isinstance(self.scene, SceneSpec) else SceneSpec.load(self.scene)

    def describe(self) -> dict:
        scene = self.scene if isinstance(self.scene, str) else (self.scene.name or "<inline>")
        return {"episode_id": self.episode_id, "scene": scene, "start": list(self.start), "mode": self.mode,
                "query": self.query, "seed": self.seed, "policy": self.policy,
                "feature_override": self.feature_override}


@dataclass
class EpisodeResult:
    episode_id: str
    success: bool
    steps: int
    executed_length: float
    optimal_length: float
    wall_time: float
    outcome: str
    final_position: tuple[float, float]
    frontier_updates: int = 0
    trace: list | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        d["final_position"] = list(self.final_position)
        return d


@dataclass
class EpisodeError:
    episode_id: str
    error: str
    message: str

    def to_dict(self) -> dict:
        return {"episode_id": self.episode_id, "error": self.error, "message": self.message}


def step_rng(seed: int, step_index: int, purpose: int) -> np.random.Generator:
    """Random stream keyed only by (episode seed, step, purpose)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, step_index, purpose]))


def camera_for(cfg: R2FConfig) -> CameraModel:
    return CameraModel(cfg.width, cfg.height, cfg.hfov, cfg.r_max)


def new_grid(cfg: R2FConfig) -> VoxelGrid:
    return VoxelGrid(cfg.voxel_size, cfg.l_occ, cfg.l_free, cfg.l_min, cfg.l_max, cfg.tau_free, cfg.tau_occ)


def goal_points(scene: SceneSpec, spec: EpisodeSpec) -> np.ndarray:
    """Success set: every instance for object search, the instructed instance for instructions."""
    return scene.goal_points(spec.query)


def make_policy(spec: EpisodeSpec, scene: SceneSpec, cfg: R2FConfig) -> tuple[Policy, dict]:
    if spec.mode == "objectnav":
        if spec.policy not in ("r2f", "nearest"):
            raise ConfigurationError(f"unknown policy {spec.policy!r}")
        query = scene.registry.text(spec.query)
        return Policy(query, cfg, semantic=spec.policy == "r2f"), {}
    if spec.mode == "vln":
        setup = prepare_instruction(spec.query, scene.registry, cfg)
        info = {"parsed": setup.parsed.to_dict(), "landmark_sources": [list(lm.sources) for lm in setup.landmarks.landmarks]}
        if spec.policy == "nearest":
            return Policy(setup.query, cfg, semantic=False), info
        if spec.policy != "r2f":
            raise ConfigurationError(f"unknown policy {spec.policy!r}")
        return vln_policy(setup, cfg), info
    raise ConfigurationError(f"unknown mode {spec.mode!r}")


class Episode:
    """One episode's mutable state, advanced one simulator step at a time."""

    def __init__(self, spec: EpisodeSpec, config: R2FConfig | None = None, policy=None,
                 scene: SceneSpec | None = None):
        self.spec = spec
        self.cfg = config or R2FConfig()
        self.scene = scene if scene is not None else spec.load_scene()
        x, y, yaw = spec.start
        self.state = AgentState(float(x), float(y), float(yaw), self.cfg.camera_height)
        self.goals = goal_points(self.scene, spec)
        if policy is None:
            policy, self.info = make_policy(spec, self.scene, self.cfg)
        else:
            self.info = {}
        self.policy = policy
        self.cam = camera_for(self.cfg)
        self.grid = new_grid(self.cfg)
        self.regions: list = []
        self.t = 0
        self.length = 0.0
        self.frontier_updates = 0
        self.done = False
        self.last_action: Action | None = None
        self.last_obs = None

    @property
    def band(self) -> tuple[float, float]:
        return self.cfg.band_low, self.cfg.band_high

    def _refresh_frontiers(self) -> None:
        cfg = self.cfg
        b = self.grid.index_bounds()
        if b is None:
            fresh = []
        else:
            lo, hi = b
            vs = cfg.voxel_size
            # one voxel of margin above and below the band keeps its edges from reading as frontier
            k0 = int(math.floor(cfg.band_low / vs)) - 1
            k1 = int(math.ceil(cfg.band_high / vs)) + 1
            snap = self.grid.snapshot_indices((lo[0] - 1, lo[1] - 1, k0), (hi[0] + 2, hi[1] + 2, k1 + 1))
            fresh = compute_regions(snap, cfg.band_low, cfg.band_high, cfg.k_u, cfg.k_f, cfg.merge_radius)
        inv = getattr(getattr(self.policy, "state", None), "invalidated_points", ())
        self.regions = sync_regions(self.regions, fresh, cfg.merge_radius, inv, cfg.invalidation_radius, self.t)
        self.frontier_updates += 1

    def observe(self):
        cfg = self.cfg
        obs = render(self.scene, self.state, self.cam, cfg.noise_sigma,
                     seed=step_rng(self.spec.seed, self.t, PURPOSE_RENDER),
                     feature_override=self.spec.feature_override)
        self.grid.integrate_observation(obs, cfg.integration_stride, cfg.r_max)
        accumulate_observation(obs, self.regions, cfg.max_rays, cfg.erosion_radius, cfg.tau_perp, cfg.tau_r,
                               cfg.perp_cost_weight, cfg.radial_cost_weight, cfg.bin_size_deg)
        synced = self.t % cfg.n_map == 0
        if synced:
            self._refresh_frontiers()
        self.last_obs = obs
        return obs, synced

    def advance(self) -> dict:
        """Run one full step; returns its trace record."""
        obs, synced = self.observe()
        action = Action(self.policy.act(obs, self.grid, self.regions, self.t, synced))
        rec = {"step": self.t, "x": self.state.x, "y": self.state.y, "yaw": self.state.yaw,
               "action": action.value, "frontier_update": synced, "n_regions": len(self.regions)}
        info = getattr(self.policy, "info", None)
        if info:
            rec.update({k: _jsonable(v) for k, v in info.items() if k not in rec})
        self.last_action = action
        self.t += 1
        if action is Action.STOP:
            self.done = True
        else:
            res = step(self.scene, self.state, action, self.cfg.forward_step, self.cfg.turn_step,
                       self.cfg.agent_radius)
            self.length += float(np.hypot(res.state.x - self.state.x, res.state.y - self.state.y))
            self.state = res.state
            if self.t >= self.cfg.t_max:
                self.done = True
        return rec

    def result(self, wall_time: float, trace=None) -> EpisodeResult:
        stopped = self.last_action is Action.STOP
        policy_outcome = getattr(self.policy, "outcome", None) if stopped else None
        p = self.state.planar
        near = bool(np.min(np.linalg.norm(self.goals[:, :2] - p, axis=1)) <= self.cfg.delta)
        if not stopped or policy_outcome == Outcome.BUDGET_EXHAUSTED.value:
            outcome = Outcome.BUDGET_EXHAUSTED
        elif policy_outcome == Outcome.EXPLORATION_EXHAUSTED.value:
            outcome = Outcome.EXPLORATION_EXHAUSTED
        else:
            outcome = Outcome.STOPPED_AT_GOAL if near else Outcome.STOPPED_WRONG
        start = np.array(self.spec.start[:2], dtype=np.float64)
        optimal = geodesic_to_set(self.scene, start, self.goals[:, :2], self.cfg.agent_radius)
        return EpisodeResult(self.spec.episode_id, outcome is Outcome.STOPPED_AT_GOAL, self.t, self.length,
                             max(float(optimal), 1e-9), wall_time, outcome.value, (float(p[0]), float(p[1])),
                             self.frontier_updates, trace)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def run_episode(spec: EpisodeSpec, config: R2FConfig | None = None, trace: bool = False, policy=None,
                scene: SceneSpec | None = None, max_steps: int | None = None) -> EpisodeResult:
    """Run ``spec`` to completion (or ``max_steps``) and score it.

    ``policy`` overrides the policy built from the spec; it needs an
    ``act(obs, grid, regions, step_index, synced)`` method.
    """
    cfg = config or R2FConfig()
    if spec.mode not in ("objectnav", "vln"):
        raise ConfigurationError(f"unknown mode {spec.mode!r}")
    ep = Episode(spec, cfg, policy, scene)
    records = [] if trace else None
    limit = cfg.t_max if max_steps is None else min(max_steps, cfg.t_max)
    t0 = time.perf_counter()
    while not ep.done and ep.t < limit:
        rec = ep.advance()
        if records is not None:
            records.append(rec)
    wall = time.perf_counter() - t0
    return ep.result(wall, records)


def compute_sr(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise InvalidArgument("no results to aggregate")
    return float(np.mean([1.0 if r.success else 0.0 for r in results]))


def compute_spl(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise InvalidArgument("no results to aggregate")
    total = 0.0
    for r in results:
        if r.success:
            total += r.optimal_length / max(r.executed_length, r.optimal_length)
    return total / len(results)


@dataclass
class BatchReport:
    results: list
    errors: list

    @property
    def ok(self) -> list[EpisodeResult]:
        return [r for r in self.results if isinstance(r, EpisodeResult)]

    def summary(self) -> dict:
        ok = self.ok
        return {
            "episodes": len(self.results),
            "errors": len(self.errors),
            "sr": compute_sr(ok) if ok else None,
            "spl": compute_spl(ok) if ok else None,
            "mean_steps": float(np.mean([r.steps for r in ok])) if ok else None,
            "mean_wall_time": float(np.mean([r.wall_time for r in ok])) if ok else None,
            "outcomes": dict(sorted(Counter(r.outcome for r in ok).items())),
        }


def _run_one(args) -> EpisodeResult | EpisodeError:
    spec, cfg, trace = args
    try:
        return run_episode(spec, cfg, trace)
    except Exception as exc:  # recorded in the report, the batch goes on
        return EpisodeError(spec.episode_id, type(exc).__name__, f"{exc}\n{traceback.format_exc(limit=3)}")


def run_batch(specs: Sequence[EpisodeSpec], config: R2FConfig | None = None, parallelism: int = 1,
              trace: bool = False) -> BatchReport:
    cfg = config or R2FConfig()
    jobs = [(s, cfg, trace) for s in specs]
    if parallelism <= 1:
        out = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            out = list(pool.map(_run_one, jobs))
    return BatchReport(out, [r for r in out if isinstance(r, EpisodeError)])


def write_results(report: BatchReport, path) -> Path:
    """Results as JSONL next to a summary JSON; returns the summary path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for r in report.results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    summary = path.with_suffix(".summary.json")
    summary.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    return summary


def write_trace(result: EpisodeResult, spec: EpisodeSpec, cfg: R2FConfig, path, header_extra: dict | None = None):
    """Trace file: a header line (spec and config) followed by one record per step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"spec": spec.describe(), "config": cfg.to_dict()}
    if header_extra:
        header.update(header_extra)
    with path.open("w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in result.trace or []:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
