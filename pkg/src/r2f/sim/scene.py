"""Scene description: axis-aligned boxes for walls and objects, goal sets, tasks.

World frame is z-up: (x, y) is the ground plane, z is height above the floor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..embedding import ConceptRegistry, ConceptSpec, DEFAULT_DIM, DEFAULT_MATCH_COS
from ..errors import InvalidArgument


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise InvalidArgument(f"degenerate box {lo} -> {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, p, eps: float = 0.0) -> bool:
        return all(self.lo[i] - eps <= p[i] <= self.hi[i] + eps for i in range(len(p)))

    def inside(self, other: "Box", eps: float = 1e-9) -> bool:
        return all(self.lo[i] >= other.lo[i] - eps and self.hi[i] <= other.hi[i] + eps for i in range(3))

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.lo) + np.array(self.hi)) / 2.0

    def planar_distance(self, x: float, y: float) -> float:
        dx = max(self.lo[0] - x, 0.0, x - self.hi[0])
        dy = max(self.lo[1] - y, 0.0, y - self.hi[1])
        return float(np.hypot(dx, dy))

    def to_list(self) -> list:
        return [list(self.lo), list(self.hi)]

    @classmethod
    def from_list(cls, v) -> "Box":
        return cls(tuple(v[0]), tuple(v[1]))


@dataclass(frozen=True)
class SceneObject:
    concept: str
    box: Box
    instance_id: int

    def to_dict(self) -> dict:
        return {"concept": self.concept, "box": self.box.to_list(), "instance_id": self.instance_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SceneObject":
        return cls(d["concept"], Box.from_list(d["box"]), int(d["instance_id"]))


@dataclass(frozen=True)
class Task:
    """A suggested episode: start pose plus an objectnav query or a VLN instruction."""

    mode: str
    query: str
    start: tuple[float, float, float]  # x, y, yaw (deg)
    target_instance: int | None = None

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "query": self.query, "start": list(self.start)}
        if self.target_instance is not None:
            d["target_instance"] = self.target_instance
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Task":
        return cls(d["mode"], d["query"], tuple(float(v) for v in d["start"]), d.get("target_instance"))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    bounds: Box
    walls: tuple[Box, ...]
    objects: tuple[SceneObject, ...]
    floor_height: float = 0.0
    seed: int = 0
    goal_sets: Mapping[str, tuple[tuple[float, float, float], ...]] = field(default_factory=dict)
    concepts: tuple[ConceptSpec, ...] = ()
    dimension: int = DEFAULT_DIM
    match_cos: float = DEFAULT_MATCH_COS
    tasks: tuple[Task, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "goal_sets", {
            k: tuple(tuple(float(c) for c in p) for p in pts) for k, pts in self.goal_sets.items()
        })
        for b in self.walls:
            if not b.inside(self.bounds):
                raise InvalidArgument(f"wall {b} outside scene bounds")
        for o in self.objects:
            if not o.box.inside(self.bounds):
                raise InvalidArgument(f"object {o.concept}#{o.instance_id} outside scene bounds")
        names = {c.name for c in self.concepts}
        for o in self.objects:
            if o.concept not in names:
                raise InvalidArgument(f"object concept {o.concept!r} not registered")

    @property
    def ceiling_height(self) -> float:
        return self.bounds.hi[2]

    @cached_property
    def registry(self) -> ConceptRegistry:
        return ConceptRegistry(self.concepts, seed=self.seed, dimension=self.dimension, match_cos=self.match_cos)

    @cached_property
    def solids(self) -> tuple[tuple[Box, str, int], ...]:
        """(box, concept, instance id) for every solid; walls carry instance id -1."""
        out = [(w, "wall", -1) for w in self.walls]
        out += [(o.box, o.concept, o.instance_id) for o in self.objects]
        return tuple(out)

    @cached_property
    def footprints(self) -> np.ndarray:
        return self.obstacle_footprints()

    def obstacle_footprints(self, body_height: float = 1.8) -> np.ndarray:
        """(M, 4) planar rectangles [xmin, ymin, xmax, ymax] of solids reaching below ``body_height``."""
        rects = [
            (b.lo[0], b.lo[1], b.hi[0], b.hi[1])
            for b, _, _ in self.solids
            if b.lo[2] < self.floor_height + body_height
        ]
        return np.array(rects, dtype=np.float64).reshape(-1, 4)

    def object(self, instance_id: int) -> SceneObject:
        for o in self.objects:
            if o.instance_id == instance_id:
                return o
        raise InvalidArgument(f"no object instance {instance_id}")

    def goal_points(self, query: str) -> np.ndarray:
        if query not in self.goal_sets:
            raise InvalidArgument(f"scene has no goal set for {query!r}")
        return np.array(self.goal_sets[query], dtype=np.float64).reshape(-1, 3)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "bounds": self.bounds.to_list(),
            "floor_height": self.floor_height,
            "walls": [w.to_list() for w in self.walls],
            "objects": [o.to_dict() for o in self.objects],
            "goal_sets": {k: [list(p) for p in v] for k, v in self.goal_sets.items()},
            "registry": {
                "dimension": self.dimension,
                "match_cos": self.match_cos,
                "concepts": [c.to_dict() for c in self.concepts],
            },
            "tasks": [t.to_dict() for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SceneSpec":
        reg = d.get("registry", {})
        return cls(
            bounds=Box.from_list(d["bounds"]),
            walls=tuple(Box.from_list(w) for w in d["walls"]),
            objects=tuple(SceneObject.from_dict(o) for o in d["objects"]),
            floor_height=float(d.get("floor_height", 0.0)),
            seed=int(d.get("seed", 0)),
            goal_sets={k: tuple(tuple(p) for p in v) for k, v in d.get("goal_sets", {}).items()},
            concepts=tuple(ConceptSpec.from_dict(c) for c in reg.get("concepts", [])),
            dimension=int(reg.get("dimension", DEFAULT_DIM)),
            match_cos=float(reg.get("match_cos", DEFAULT_MATCH_COS)),
            tasks=tuple(Task.from_dict(t) for t in d.get("tasks", [])),
            name=d.get("name", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def concept_specs(names: Sequence[str], seed: int, match_cos: float = DEFAULT_MATCH_COS) -> tuple[ConceptSpec, ...]:
    seen = []
    for n in names:
        if n not in seen:
            seen.append(n)
    return tuple(ConceptSpec(n, seed, match_cos) for n in seen)
