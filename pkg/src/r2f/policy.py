"""The decision layer: frontier scoring, goal selection, goal detection and approach.

One ``Policy`` instance drives one episode. Each call to ``act`` receives the
newest observation, the agent's map and the current frontier regions, and
returns a single discrete action. The semantic variant ranks frontier regions
by their best direction-bin cosine with the query; the geometric baseline
always takes the nearest region. Both share the detector and approach logic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .config import R2FConfig
from .errors import NoPath, UnreachableGoal
from .frontiers import FrontierRegion
from .occupancy import CellClass, VoxelGrid
from .planner import Path, StallDetector, follow, inflation_cells, plan_path
from .sim.kinematics import Action

NO_EVIDENCE = None
SCORE_TIE_TOL = 1e-9
# a hypothesis refresh farther than this from the current goal is treated as another object
HYPOTHESIS_JUMP = 2.5
HYPOTHESIS_MOVE = 0.5
# how far past r_max a rejected out-of-range hypothesis keeps suppressing along its ray
SUPPRESS_DEPTH = 15.0
MAX_CANDIDATE_PIXELS = 2000
# a tracked region that vanished at sync is followed to the nearest region within this distance
SUCCESSOR_RADIUS = 2.0


class Mode(str, Enum):
    SELECT = "select"
    TRACK = "track"
    APPROACH = "approach"
    SWEEP = "sweep"
    DONE = "done"


@dataclass(frozen=True)
class Hypothesis:
    point: np.ndarray       # world coordinates
    origin: np.ndarray      # camera position when observed
    direction: np.ndarray   # unit pixel ray
    oor: bool               # from an out-of-range pixel (depth clamped)
    score: float
    step: int = 0


@dataclass(frozen=True)
class GoalChoice:
    kind: str                              # "semantic", "geometric" or "exhausted"
    region: FrontierRegion | None = None
    score: float | None = None


@dataclass
class DetectorState:
    consecutive_count: int = 0
    last_hypothesis: Hypothesis | None = None
    last_max: float | None = None


@dataclass
class PolicyState:
    mode: Mode = Mode.SELECT
    detector: DetectorState = field(default_factory=DetectorState)
    visited_poses: list = field(default_factory=list)
    invalidated_points: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    step_index: int = 0
    path: Path | None = None
    target: np.ndarray | None = None        # centroid of the tracked region
    target_id: int | None = None
    plan_step: int = 0
    hypothesis: Hypothesis | None = None
    hypothesis_step: int = 0
    spin_remaining: int = 0
    sweep_remaining: int = 0
    candidate: Hypothesis | None = None
    verified: bool = True                   # the approached hypothesis passed (or needs no) verification
    outcome: str | None = None


# ------------------------------------------------------------------ scoring


def score_region(region: FrontierRegion, query) -> float | None:
    """Best cosine between a populated bin feature and ``query``; ``NO_EVIDENCE`` if no bin is populated."""
    if not region.bins:
        return NO_EVIDENCE
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    return max(float(acc.feature() @ q) for acc in region.bins.values())


def _bin_scores(region: FrontierRegion, q: np.ndarray) -> list[float]:
    return [float(acc.feature() @ q) for acc in region.bins.values()]


def candidate_regions(regions: Sequence[FrontierRegion], visited, invalidated, cfg: R2FConfig):
    inv = np.asarray(list(invalidated), dtype=np.float64).reshape(-1, 3)
    live = []
    for r in regions:
        if r.invalidated:
            continue
        if inv.shape[0] and np.any(np.linalg.norm(inv - r.centroid, axis=1) <= cfg.invalidation_radius):
            continue
        live.append(r)
    vis = np.asarray(list(visited), dtype=np.float64).reshape(-1, 2)
    if vis.shape[0] == 0:
        return live
    far = [r for r in live if np.min(np.linalg.norm(vis - r.centroid[:2], axis=1)) > cfg.visited_filter]
    return far if far else live


def select_goal(regions: Sequence[FrontierRegion], query, agent_xy, state: PolicyState, cfg: R2FConfig,
                semantic: bool = True) -> GoalChoice:
    """Pick the next frontier region.

    Semantic selection applies only when the candidates' populated bins disagree
    (at least two distinct bin scores); otherwise the nearest candidate wins, as
    in the geometric baseline.
    """
    cands = candidate_regions(regions, state.visited_poses, state.invalidated_points, cfg)
    if not cands:
        return GoalChoice("exhausted")
    agent_xy = np.asarray(agent_xy, dtype=np.float64)[:2]
    dist = {r.id: float(np.linalg.norm(r.centroid[:2] - agent_xy)) for r in cands}
    if semantic:
        q = np.asarray(query, dtype=np.float64)
        q = q / np.linalg.norm(q)
        all_scores = []
        scored = []
        for r in cands:
            if r.bins:
                bs = _bin_scores(r, q)
                all_scores += bs
                scored.append((r, max(bs)))
        if all_scores and max(all_scores) - min(all_scores) > SCORE_TIE_TOL:
            best = max(s for _, s in scored)
            top = [r for r, s in scored if s >= best - SCORE_TIE_TOL]
            top.sort(key=lambda r: (dist[r.id], r.id))
            return GoalChoice("semantic", top[0], best)
    near = sorted(cands, key=lambda r: (dist[r.id], r.id))[0]
    return GoalChoice("geometric", near, score_region(near, query) if semantic else None)


# ------------------------------------------------------------------ detection


class RejectionMemory:
    """Locations of rejected hypotheses; pixels pointing at them are ignored by the detector.

    An in-range rejection suppresses surface points within ``radius`` (planar) of
    it. An out-of-range rejection only fixes a direction, so it suppresses
    everything within ``radius`` of its ray beyond ``r_max``.
    """

    def __init__(self, radius: float = 1.0, r_max: float = 3.5):
        self.radius = radius
        self.r_max = r_max
        self.items: list[Hypothesis] = []

    def __len__(self) -> int:
        return len(self.items)

    def add(self, h: Hypothesis) -> None:
        self.items.append(h)

    def _dist_to_item(self, pts: np.ndarray, h: Hypothesis) -> np.ndarray:
        """Planar distance from points (..., 3) to what ``h`` suppresses."""
        p = pts[..., :2]
        if not h.oor:
            return np.linalg.norm(p - h.point[:2], axis=-1)
        d = h.direction[:2]
        n = float(np.linalg.norm(d))
        start = h.origin[:2] + d * self.r_max
        rel = p - start
        if n < 1e-9:
            return np.linalg.norm(rel, axis=-1)
        u = d / n
        t = np.clip(rel @ u, 0.0, SUPPRESS_DEPTH)
        return np.linalg.norm(rel - t[..., None] * u, axis=-1)

    def suppressed(self, origin, dirs, ranges, oor) -> np.ndarray:
        """Boolean mask over candidate pixels given their rays and clamped ranges."""
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        out = np.zeros(dirs.shape[0], dtype=bool)
        if not self.items or dirs.shape[0] == 0:
            return out
        ends = origin + dirs * np.asarray(ranges)[:, None]
        # out-of-range pixels see something somewhere beyond r_max along their ray
        steps = np.arange(0.0, SUPPRESS_DEPTH + 1e-9, 0.25)
        samples = origin + dirs[:, None, :] * (self.r_max - self.radius + steps)[None, :, None]
        for h in self.items:
            near_end = self._dist_to_item(ends, h) <= self.radius
            near_ray = np.min(self._dist_to_item(samples, h), axis=1) <= self.radius
            out |= np.where(oor, near_ray, near_end)
        return out


class GoalDetector:
    """Dense query matching with a consecutive-frame confirmation rule."""

    def __init__(self, tau_g: float = 0.14, n_frames: int = 3):
        self.tau_g = tau_g
        self.n_frames = n_frames
        self.state = DetectorState()

    def reset(self) -> None:
        self.state.consecutive_count = 0

    def update(self, obs, query, step: int = 0, rejections: RejectionMemory | None = None) -> Hypothesis | None:
        sims = obs.similarity(query)
        flat = sims.ravel()
        k = int(np.argmax(flat))
        self.state.last_max = float(flat[k])
        if rejections is not None and len(rejections) and flat[k] > self.tau_g:
            cand = np.flatnonzero(flat > self.tau_g)
            if cand.size > MAX_CANDIDATE_PIXELS:
                cand = cand[np.argpartition(-flat[cand], MAX_CANDIDATE_PIXELS)[:MAX_CANDIDATE_PIXELS]]
            cand = cand[np.lexsort((cand, -flat[cand]))]
            rows, cols = np.divmod(cand, sims.shape[1])
            sup = rejections.suppressed(obs.position, obs.world_rays(rows, cols), obs.depth[rows, cols],
                                        obs.oor_mask[rows, cols])
            keep = np.flatnonzero(~sup)
            k = int(cand[keep[0]]) if keep.size else -1
        best = float(flat[k]) if k >= 0 else -np.inf
        if best > self.tau_g:
            self.state.consecutive_count = min(self.state.consecutive_count + 1, self.n_frames)
        else:
            self.state.consecutive_count = 0
        if self.state.consecutive_count < self.n_frames:
            return None
        r, c = divmod(k, sims.shape[1])
        d = obs.world_rays(np.array([r]), np.array([c]))[0]
        origin = obs.position
        h = Hypothesis(origin + d * float(obs.depth[r, c]), origin, d, bool(obs.oor_mask[r, c]), best, step)
        self.state.last_hypothesis = h
        return h


def detect_goal(obs, query, cfg: R2FConfig, state: PolicyState) -> np.ndarray | None:
    """Functional form of one detector update on ``state.detector``."""
    det = GoalDetector(cfg.tau_g, cfg.n_cons)
    det.state = state.detector
    h = det.update(obs, query, state.step_index)
    return None if h is None else h.point


# ------------------------------------------------------------------ policy


class Policy:
    """R2F policy (``semantic=True``) or the nearest-frontier baseline (``semantic=False``).

    ``verifier``, when given, turns detections into candidates that must pass a
    rotational landmark sweep before the final approach.
    """

    def __init__(self, query, config: R2FConfig | None = None, semantic: bool = True, verifier=None):
        self.cfg = config or R2FConfig()
        self.query = np.asarray(query, dtype=np.float64)
        self.semantic = semantic
        self.verifier = verifier
        n = self.cfg.n_confirm if verifier is not None else self.cfg.n_cons
        self.detector = GoalDetector(self.cfg.tau_g, n)
        self.state = PolicyState(detector=self.detector.state)
        self.state.spin_remaining = 24 if self.cfg.initial_spin else 0
        self.stall = StallDetector(self.cfg.stall_window)
        self.rejections = RejectionMemory(self.cfg.invalidation_radius, self.cfg.r_max)
        self.regions: list[FrontierRegion] = []
        self.info: dict = {}
        self._last_forward = False
        self._pose = None

    # ---------------------------------------------------------- helpers

    @property
    def outcome(self) -> str | None:
        return self.state.outcome

    @property
    def band(self):
        return (self.cfg.band_low, self.cfg.band_high)

    def _plan(self, grid: VoxelGrid, goal, target_region=None) -> Path:
        return plan_path(grid, self._pose.planar, np.asarray(goal)[:2], self.cfg.agent_radius, self.band,
                         self.cfg.unknown_cost, self.cfg.goal_projection_radius, target_region)

    def invalidate(self, point) -> None:
        p = np.asarray(point, dtype=np.float64).reshape(3)
        self.state.invalidated_points.append(p)
        for r in self.regions:
            if np.linalg.norm(r.centroid - p) <= self.cfg.invalidation_radius:
                r.invalidated = True

    def _finish(self, outcome: str) -> Action:
        self.state.mode = Mode.DONE
        self.state.outcome = outcome
        return Action.STOP

    def _waypoint_blocked(self, grid: VoxelGrid) -> bool:
        path = self.state.path
        if path is None or not path.waypoints:
            return False
        wp = np.asarray(path.waypoints[0])
        vs = grid.voxel_size
        r = inflation_cells(self.cfg.agent_radius, vs)
        i, j = int(math.floor(wp[0] / vs)), int(math.floor(wp[1] / vs))
        k0 = int(math.floor(self.cfg.band_low / vs + 0.5 - 1e-9))
        k1 = int(math.floor(self.cfg.band_high / vs - 0.5 + 1e-9)) + 1
        snap = grid.snapshot_indices((i - r, j - r, k0), (i + r + 1, j + r + 1, max(k1, k0 + 1)))
        occ = np.any(snap.classes == CellClass.OCCUPIED, axis=2)
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        return bool(np.any(occ & (xx * xx + yy * yy <= r * r)))

    # ---------------------------------------------------------- main entry

    def act(self, obs, grid: VoxelGrid, regions: Sequence[FrontierRegion], step_index: int,
            synced: bool = False) -> Action:
        s = self.state
        s.step_index = step_index
        self._pose = obs.pose
        self.regions = list(regions)
        pos = obs.pose.planar
        if not s.visited_poses or np.linalg.norm(s.visited_poses[-1] - pos) > 1e-6:
            s.visited_poses.append(pos)
        self.stall.push(pos[0], pos[1], self._last_forward)
        self.info = {"detector_max": None, "count": 0, "region": None, "score": None, "choice": None}
        action = self._decide(obs, grid, synced)
        self._last_forward = action is Action.FORWARD
        if s.hypothesis is not None:
            self.info["hypothesis"] = [round(float(v), 4) for v in s.hypothesis.point]
            self.info["hypothesis_oor"] = s.hypothesis.oor
        self.info.update(mode=s.mode.value, action=action.value,
                         detector_max=self.detector.state.last_max, count=self.detector.state.consecutive_count)
        return action

    def _decide(self, obs, grid: VoxelGrid, synced: bool) -> Action:
        s = self.state
        if s.mode is Mode.DONE:
            return Action.STOP
        if s.step_index + 1 >= self.cfg.t_max:
            return self._finish("budget_exhausted")

        if s.mode is Mode.SWEEP:
            a = self._sweep(obs)
            if a is not None:
                return a
        else:
            hyp = self.detector.update(obs, self.query, s.step_index,
                                       self.rejections if len(self.rejections) else None)
            if hyp is not None:
                self._on_detection(hyp)
                if s.mode is Mode.SWEEP:
                    s.sweep_remaining -= 1
                    return Action.TURN_LEFT

        if s.mode is Mode.APPROACH:
            a = self._approach(grid)
            if a is not None:
                return a

        if s.mode is Mode.TRACK and synced:
            self._follow_successor()

        for _ in range(6):
            if s.mode is Mode.SELECT:
                if s.spin_remaining > 0:
                    s.spin_remaining -= 1
                    return Action.TURN_LEFT
                choice = select_goal(self.regions, self.query, self._pose.planar, s, self.cfg, self.semantic)
                self.info["choice"] = choice.kind
                if choice.kind == "exhausted":
                    return self._finish("exploration_exhausted")
                self.info["region"] = choice.region.id
                self.info["score"] = choice.score
                try:
                    s.path = self._plan(grid, choice.region.centroid, choice.region.id)
                except (NoPath, UnreachableGoal):
                    self.invalidate(choice.region.centroid)
                    continue
                s.target = np.array(choice.region.centroid)
                s.target_id = choice.region.id
                s.plan_step = s.step_index
                s.mode = Mode.TRACK
                self.stall.clear()
            if s.mode is Mode.TRACK:
                a = self._track(grid)
                if a is not None:
                    return a
        return Action.TURN_LEFT

    # ---------------------------------------------------------- modes

    def _follow_successor(self) -> None:
        """Keep tracking a frontier that moved: retarget to the nearest region near the old centroid."""
        s = self.state
        t = s.target
        live = [r for r in self.regions if not r.invalidated]
        if t is None or not live:
            return
        d = [float(np.linalg.norm(r.centroid - t)) for r in live]
        k = int(np.argmin(d))
        if d[k] <= self.cfg.merge_radius or d[k] > SUCCESSOR_RADIUS:
            return
        s.target = np.array(live[k].centroid)
        s.target_id = live[k].id
        s.plan_step = -self.cfg.replan_interval   # forces a replan on the next tracking step

    def _track(self, grid: VoxelGrid) -> Action | None:
        s = self.state
        if s.step_index - s.plan_step >= self.cfg.replan_interval or self._waypoint_blocked(grid):
            try:
                s.path = self._plan(grid, s.target, s.target_id)
                s.plan_step = s.step_index
            except (NoPath, UnreachableGoal):
                self.invalidate(s.target)
                s.mode = Mode.SELECT
                return None
        action, s.path = follow(s.path, self._pose)
        if action is None:
            self.invalidate(s.target)
            s.mode = Mode.SELECT
            return None
        if self.stall.stalled():
            self.invalidate(s.target)
            self.stall.clear()
            s.mode = Mode.SELECT
            return None
        return action

    def _on_detection(self, hyp: Hypothesis) -> None:
        """Act on a confirmed detection.

        With landmark verification, only an in-range detection starts the sweep;
        an out-of-range one fixes just a direction, so it is approached first.
        """
        s = self.state
        check = self.verifier is not None and self.verifier.has_landmarks
        if s.mode is Mode.APPROACH:
            if check and not s.verified and not hyp.oor:
                self._start_sweep(hyp)
                return
            cur = s.hypothesis
            d = float(np.linalg.norm(hyp.point[:2] - cur.point[:2]))
            age = s.step_index - s.hypothesis_step
            refine = cur.oor and (not hyp.oor or d > HYPOTHESIS_MOVE)
            if d <= HYPOTHESIS_JUMP and (refine or age >= self.cfg.replan_interval):
                s.hypothesis = hyp
                s.hypothesis_step = s.step_index
                if d > HYPOTHESIS_MOVE:
                    s.path = None
            return
        if check and not hyp.oor:
            self._start_sweep(hyp)
            return
        self._start_approach(hyp, verified=not check)

    def _start_sweep(self, hyp: Hypothesis) -> None:
        s = self.state
        s.mode = Mode.SWEEP
        s.candidate = hyp
        s.hypothesis = None
        s.path = None
        s.sweep_remaining = self.cfg.sweep_turns
        self.verifier.reset()

    def _start_approach(self, hyp: Hypothesis, verified: bool = True) -> None:
        s = self.state
        s.mode = Mode.APPROACH
        s.hypothesis = hyp
        s.hypothesis_step = s.step_index
        s.verified = verified
        s.path = None
        self.stall.clear()

    def _drop_hypothesis(self) -> None:
        s = self.state
        s.hypothesis = None
        s.path = None
        s.mode = Mode.SELECT
        self.detector.reset()

    def _approach(self, grid: VoxelGrid) -> Action | None:
        s = self.state
        h = s.hypothesis
        if float(np.linalg.norm(self._pose.planar - h.point[:2])) <= self.cfg.approach_stop:
            if not h.oor:
                return self._finish("stopped")
            self._drop_hypothesis()
            return None
        if s.path is None or s.step_index - s.plan_step >= self.cfg.replan_interval or self._waypoint_blocked(grid):
            try:
                s.path = self._plan(grid, h.point)
                s.plan_step = s.step_index
            except (NoPath, UnreachableGoal):
                self.rejections.add(h)
                self.invalidate(h.point)
                self._drop_hypothesis()
                return None
        action, s.path = follow(s.path, self._pose)
        if action is None and not h.oor:
            return self._finish("stopped")
        if action is None or self.stall.stalled():
            self.stall.clear()
            self._drop_hypothesis()
            return None
        return action

    def _sweep(self, obs) -> Action | None:
        s = self.state
        self.verifier.observe(obs)
        if s.sweep_remaining > 0:
            s.sweep_remaining -= 1
            return Action.TURN_LEFT
        cand = s.candidate
        s.candidate = None
        self.info["verified"] = self.verifier.confirmed()
        if self.info["verified"]:
            self._start_approach(cand)
            return None
        self.rejections.add(cand)
        s.rejected.append(cand.point)
        self.invalidate(cand.point)
        self._drop_hypothesis()
        return None


def baseline_policy(query, config: R2FConfig | None = None) -> Policy:
    """Nearest-frontier exploration with the same detector and approach."""
    return Policy(query, config, semantic=False)


def step_policy(policy: Policy, obs, grid: VoxelGrid, regions, step_index: int, synced: bool = False) -> Action:
    return policy.act(obs, grid, regions, step_index, synced)
