"""Discrete agent actions and collision-checked stepping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .camera import AgentState
from .scene import SceneSpec

FORWARD_STEP = 0.25
TURN_STEP = 15.0
AGENT_RADIUS = 0.2


class Action(str, Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"


@dataclass(frozen=True)
class StepResult:
    state: AgentState
    collided: bool = False
    stopped: bool = False


def _segment_rect_distance(p0, p1, rect) -> float:
    """Distance between segment p0-p1 and the rectangle [xmin, ymin, xmax, ymax]."""
    xmin, ymin, xmax, ymax = rect

    def point_rect(p):
        dx = max(xmin - p[0], 0.0, p[0] - xmax)
        dy = max(ymin - p[1], 0.0, p[1] - ymax)
        return math.hypot(dx, dy)

    def point_segment(q):
        d = p1 - p0
        dd = float(d @ d)
        t = 0.0 if dd == 0.0 else min(1.0, max(0.0, float((q - p0) @ d) / dd))
        return float(np.linalg.norm(p0 + t * d - q))

    # does the segment cross the rectangle? (Liang-Barsky clip)
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    crosses = True
    for lo, hi, o, dv in ((xmin, xmax, p0[0], d[0]), (ymin, ymax, p0[1], d[1])):
        if dv == 0.0:
            if o < lo or o > hi:
                crosses = False
                break
        else:
            a, b = (lo - o) / dv, (hi - o) / dv
            if a > b:
                a, b = b, a
            t0, t1 = max(t0, a), min(t1, b)
            if t0 > t1:
                crosses = False
                break
    if crosses:
        return 0.0
    corners = (np.array([xmin, ymin]), np.array([xmin, ymax]), np.array([xmax, ymin]), np.array([xmax, ymax]))
    return min(point_rect(p0), point_rect(p1), *(point_segment(c) for c in corners))


def swept_disc_collides(scene: SceneSpec, p0, p1, radius: float = AGENT_RADIUS) -> bool:
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    b = scene.bounds
    if (min(p1[0], p0[0]) - radius < b.lo[0] or max(p1[0], p0[0]) + radius > b.hi[0]
            or min(p1[1], p0[1]) - radius < b.lo[1] or max(p1[1], p0[1]) + radius > b.hi[1]):
        return True
    fp = scene.footprints
    if fp.shape[0] == 0:
        return False
    # cheap reject on bounding boxes before the exact test
    lo = np.minimum(p0, p1) - radius
    hi = np.maximum(p0, p1) + radius
    near = (fp[:, 0] <= hi[0]) & (fp[:, 2] >= lo[0]) & (fp[:, 1] <= hi[1]) & (fp[:, 3] >= lo[1])
    return any(_segment_rect_distance(p0, p1, r) < radius for r in fp[near])


def step(scene: SceneSpec, state: AgentState, action: Action | str,
         forward_step: float = FORWARD_STEP, turn_step: float = TURN_STEP,
         agent_radius: float = AGENT_RADIUS) -> StepResult:
    action = Action(action)
    if action is Action.STOP:
        return StepResult(state, stopped=True)
    if action is Action.TURN_LEFT:
        return StepResult(AgentState(state.x, state.y, state.yaw + turn_step, state.height))
    if action is Action.TURN_RIGHT:
        return StepResult(AgentState(state.x, state.y, state.yaw - turn_step, state.height))
    yaw = math.radians(state.yaw)
    p0 = np.array([state.x, state.y])
    p1 = p0 + forward_step * np.array([math.cos(yaw), math.sin(yaw)])
    if swept_disc_collides(scene, p0, p1, agent_radius):
        return StepResult(state, collided=True)
    return StepResult(AgentState(float(p1[0]), float(p1[1]), state.yaw, state.height))
