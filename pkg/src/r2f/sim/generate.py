"""Procedural scenes: random multi-room layouts plus two scripted families.

* ``generate_scene`` lays rooms on a coarse grid, joins them with doorways
  along a random spanning tree and places furniture flush against walls.
* ``build_beacon_scene`` is a hub with four corridors ending in rooms. One end
  room holds a context object whose features lean toward the target query, seen
  from the hub beyond depth range; the target itself sits out of sight beside it.
* ``build_decoy_scene`` uses the same hub. An instance of the target noun with
  no landmarks is visible from the start; the instructed instance and its
  landmarks are hidden in the opposite end room.

Goal points are navigable viewpoints around each object rather than the object
centre, so success can be judged by planar distance from where the agent stands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from ..embedding import ConceptRegistry, ConceptSpec, load_lexicon, STRUCTURAL_CONCEPTS
from ..errors import InvalidArgument
from .geodesic import NavGrid
from .kinematics import swept_disc_collides
from .scene import Box, SceneObject, SceneSpec, Task, concept_specs

WALL_T = 0.2
CEILING = 2.6
DOOR_WIDTH = 1.0
OBJECT_GAP = 0.55     # clear floor kept between neighbouring objects
DOOR_CLEARANCE = 0.8  # clear floor kept in front of doorways
VIEW_OFFSET = 0.45    # viewpoint distance from an object face

# width along the wall, depth into the room, bottom and top height
OBJECT_SIZES: dict[str, tuple[float, float, float, float]] = {
    "chair": (0.5, 0.5, 0.0, 0.9),
    "table": (1.0, 0.7, 0.0, 0.75),
    "bed": (1.6, 2.0, 0.0, 0.6),
    "sofa": (1.8, 0.8, 0.0, 0.85),
    "toilet": (0.45, 0.65, 0.0, 0.8),
    "sink": (0.6, 0.45, 0.0, 0.9),
    "tv": (1.0, 0.25, 0.0, 1.3),
    "plant": (0.45, 0.45, 0.0, 1.1),
    "lamp": (0.35, 0.35, 0.0, 1.5),
    "cabinet": (0.9, 0.45, 0.0, 1.8),
    "bookshelf": (1.0, 0.35, 0.0, 1.9),
    "refrigerator": (0.75, 0.7, 0.0, 1.8),
    "oven": (0.6, 0.6, 0.0, 0.9),
    "desk": (1.2, 0.6, 0.0, 0.75),
    "bathtub": (1.6, 0.75, 0.0, 0.6),
    "piano": (1.5, 0.6, 0.0, 1.2),
    "painting": (0.8, 0.05, 1.2, 1.9),
    "curtain": (1.2, 0.08, 0.3, 2.4),
    "pillow": (0.5, 0.35, 0.0, 0.4),
    "chest drawer": (1.0, 0.5, 0.0, 1.0),
    "mirror": (0.6, 0.05, 1.0, 1.9),
    "clock": (0.4, 0.08, 1.6, 2.0),
    "vase": (0.3, 0.3, 0.0, 0.7),
    "fireplace": (1.4, 0.5, 0.0, 1.1),
    "counter": (1.6, 0.6, 0.0, 0.9),
}

BEACON_TARGETS = ("chair", "toilet", "tv", "plant", "sink", "piano", "oven")
DECOY_TARGETS = ("chair", "table", "sink", "tv", "toilet", "oven")
LANDMARKS = ("painting", "curtain", "lamp", "plant", "cabinet", "bookshelf", "clock", "vase",
             "mirror", "pillow", "chest drawer", "fireplace")
ATTRIBUTES = ("wooden", "red", "large", "small", "white", "round", "dark", "old", "blue")
INSTRUCTION_TEMPLATES = (
    "{t} located near the {a} and {b}",
    "the {t} next to the {a} and the {b}",
    "{t} close to the {a}, {b}",
    "find the {t} beside the {a} and {b}",
)

# separability margins used when choosing the embedding seed of a scripted scene
DISTRACTOR_MAX_COS = 0.06
LANDMARK_MAX_COS = 0.07


@dataclass(frozen=True)
class _Door:
    rect: tuple[float, float, float, float]  # planar gap [xmin, ymin, xmax, ymax]


def _rect_distance(a, b) -> float:
    dx = max(a[0] - b[2], b[0] - a[2], 0.0)
    dy = max(a[1] - b[3], b[1] - a[3], 0.0)
    return math.hypot(dx, dy)


def _wall_line(horizontal: bool, coord: float, a0: float, a1: float, gaps, height: float = CEILING):
    """Boxes of a wall along x (``horizontal``) or y at ``coord``, spanning [a0, a1] minus gaps."""
    t = WALL_T / 2
    pieces = []
    cur = a0
    for c, w in sorted(gaps):
        g0, g1 = c - w / 2, c + w / 2
        if g0 > cur:
            pieces.append((cur, g0))
        cur = max(cur, g1)
    if a1 > cur:
        pieces.append((cur, a1))
    boxes = []
    for p0, p1 in pieces:
        if p1 - p0 < 1e-6:
            continue
        if horizontal:
            boxes.append(Box((p0, coord - t, 0.0), (p1, coord + t, height)))
        else:
            boxes.append(Box((coord - t, p0, 0.0), (coord + t, p1, height)))
    return boxes


def _door_rect(horizontal: bool, coord: float, c: float, w: float = DOOR_WIDTH):
    t = WALL_T / 2
    if horizontal:
        return (c - w / 2, coord - t, c + w / 2, coord + t)
    return (coord - t, c - w / 2, coord + t, c + w / 2)


def _flush_box(interior, side: int, center: float, size) -> Box:
    """Object box flush against one interior wall: 0 south, 1 north, 2 west, 3 east."""
    w, d, z0, z1 = size
    x0, y0, x1, y1 = interior
    if side == 0:
        return Box((center - w / 2, y0, z0), (center + w / 2, y0 + d, z1))
    if side == 1:
        return Box((center - w / 2, y1 - d, z0), (center + w / 2, y1, z1))
    if side == 2:
        return Box((x0, center - w / 2, z0), (x0 + d, center + w / 2, z1))
    return Box((x1 - d, center - w / 2, z0), (x1, center + w / 2, z1))


def _planar(box: Box):
    return (box.lo[0], box.lo[1], box.hi[0], box.hi[1])


def viewpoints(grid: NavGrid, box: Box, main_label: int | None = None, offset: float = VIEW_OFFSET):
    """Navigable standing points facing each side of ``box``."""
    x0, y0, x1, y1 = _planar(box)
    cands = []
    for along, fixed, horizontal in (((x0, x1), y0 - offset, True), ((x0, x1), y1 + offset, True),
                                     ((y0, y1), x0 - offset, False), ((y0, y1), x1 + offset, False)):
        a0, a1 = along
        ts = [(a0 + a1) / 2]
        if a1 - a0 > 1.2:
            ts += [a0 + 0.3, a1 - 0.3]
        for tv in ts:
            cands.append((tv, fixed) if horizontal else (fixed, tv))
    out = []
    for p in cands:
        i, j = grid.index(p)
        if not (0 <= i < grid.nx and 0 <= j < grid.ny) or not grid.free[i, j]:
            continue
        if main_label is not None and grid.components[i, j] != main_label:
            continue
        out.append((float(p[0]), float(p[1]), 0.0))
    return out


def _main_component(grid: NavGrid) -> tuple[int, bool]:
    """Largest navigable component and whether it holds every navigable cell."""
    labels = grid.components
    vals = labels[labels >= 0]
    if vals.size == 0:
        return -1, False
    counts = np.bincount(vals)
    main = int(np.argmax(counts))
    return main, bool(counts[main] == vals.size)


def _sample_spawn(scene: SceneSpec, grid: NavGrid, main: int, rects, rng, clearance: float = 0.5):
    for _ in range(400):
        x0, y0, x1, y1 = rects[rng.integers(len(rects))]
        p = np.array([rng.uniform(x0 + 0.6, x1 - 0.6), rng.uniform(y0 + 0.6, y1 - 0.6)])
        i, j = grid.index(p)
        if not grid.free[i, j] or grid.components[i, j] != main:
            continue
        if swept_disc_collides(scene, p, p, clearance):
            continue
        return (float(p[0]), float(p[1]), float(rng.integers(24) * 15))
    raise InvalidArgument("no spawn point found")


def _tasks_and_goals(scene: SceneSpec, grid: NavGrid, main: int, rects, rng, n_tasks: int = 4):
    goals: dict[str, list] = {}
    for o in scene.objects:
        goals.setdefault(o.concept, []).extend(viewpoints(grid, o.box, main))
    goals = {k: v for k, v in goals.items() if v}
    names = sorted(goals)
    order = rng.permutation(len(names))[:n_tasks]
    tasks = [Task("objectnav", names[k], _sample_spawn(scene, grid, main, rects, rng)) for k in order]
    return goals, tasks


def _replace(scene: SceneSpec, **kw) -> SceneSpec:
    d = dict(bounds=scene.bounds, walls=scene.walls, objects=scene.objects, floor_height=scene.floor_height,
             seed=scene.seed, goal_sets=scene.goal_sets, concepts=scene.concepts, dimension=scene.dimension,
             match_cos=scene.match_cos, tasks=scene.tasks, name=scene.name)
    d.update(kw)
    return SceneSpec(**d)


# ---------------------------------------------------------------- random layouts

def generate_scene(seed: int, difficulty: str = "small") -> SceneSpec:
    """Seeded multi-room scene; ``difficulty`` is ``small`` (2-4 rooms) or ``medium`` (5-8 rooms)."""
    if difficulty not in ("small", "medium"):
        raise InvalidArgument(f"difficulty must be small or medium, got {difficulty!r}")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x5CE0E])
    for _ in range(50):
        scene = _try_generate(int(seed), difficulty, rng)
        if scene is not None:
            return scene
    raise RuntimeError(f"could not generate a valid scene for seed {seed}")


def _try_generate(seed: int, difficulty: str, rng) -> SceneSpec | None:
    if difficulty == "small":
        gx, gy, n_rooms, size_range = 2, 2, int(rng.integers(2, 5)), (4.0, 6.0)
    else:
        gx, gy, n_rooms, size_range = 3, 3, int(rng.integers(5, 9)), (4.5, 6.5)
    widths = rng.uniform(*size_range, size=gx)
    heights = rng.uniform(*size_range, size=gy)
    xs = np.concatenate([[0.0], np.cumsum(widths)])
    ys = np.concatenate([[0.0], np.cumsum(heights)])

    # grow a connected set of room cells
    cells = [(int(rng.integers(gx)), int(rng.integers(gy)))]
    while len(cells) < n_rooms:
        frontier = sorted({(i + di, j + dj) for i, j in cells for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                           if 0 <= i + di < gx and 0 <= j + dj < gy and (i + di, j + dj) not in cells})
        cells.append(frontier[rng.integers(len(frontier))])
    rooms = set(cells)

    # doors: random spanning tree plus a few extra loops
    edges = sorted({tuple(sorted(((i, j), (i + di, j + dj)))) for i, j in rooms for di, dj in ((1, 0), (0, 1))
                    if (i + di, j + dj) in rooms})
    order = rng.permutation(len(edges))
    ds = DisjointSet(sorted(rooms))
    doors_on = set()
    for k in order:
        a, b = edges[k]
        if ds.merge(a, b):
            doors_on.add(edges[k])
        elif rng.random() < 0.25:
            doors_on.add(edges[k])

    walls: list[Box] = []
    doors: list[_Door] = []
    t = WALL_T / 2
    # vertical lines x = xs[i]
    for i in range(gx + 1):
        for j in range(gy):
            left, right = (i - 1, j), (i, j)
            if left not in rooms and right not in rooms:
                continue
            gaps = []
            y0, y1 = ys[j], ys[j + 1]
            if tuple(sorted((left, right))) in doors_on:
                c = rng.uniform(y0 + 0.6 + DOOR_WIDTH / 2, y1 - 0.6 - DOOR_WIDTH / 2)
                gaps.append((c, DOOR_WIDTH))
                doors.append(_Door(_door_rect(False, xs[i], c)))
            walls += _wall_line(False, xs[i], y0 - t, y1 + t, gaps)
    for j in range(gy + 1):
        for i in range(gx):
            below, above = (i, j - 1), (i, j)
            if below not in rooms and above not in rooms:
                continue
            gaps = []
            x0, x1 = xs[i], xs[i + 1]
            if tuple(sorted((below, above))) in doors_on:
                c = rng.uniform(x0 + 0.6 + DOOR_WIDTH / 2, x1 - 0.6 - DOOR_WIDTH / 2)
                gaps.append((c, DOOR_WIDTH))
                doors.append(_Door(_door_rect(True, ys[j], c)))
            walls += _wall_line(True, ys[j], x0 - t, x1 + t, gaps)
    bounds = Box((-t, -t, 0.0), (xs[-1] + t, ys[-1] + t, CEILING))
    # fill cells that are not rooms so they hold no free space
    for i in range(gx):
        for j in range(gy):
            if (i, j) not in rooms:
                walls.append(Box((max(xs[i], -t), max(ys[j], -t), 0.0),
                                 (min(xs[i + 1], xs[-1] + t), min(ys[j + 1], ys[-1] + t), CEILING)))

    interiors = {c: (xs[c[0]] + t, ys[c[1]] + t, xs[c[0] + 1] - t, ys[c[1] + 1] - t) for c in sorted(rooms)}
    room_list = sorted(rooms)

    pool = sorted(OBJECT_SIZES)
    n_obj = int(rng.integers(5, 16))
    objects: list[SceneObject] = []
    taken = []
    for k in range(n_obj):
        room = room_list[(k + int(rng.integers(len(room_list)))) % len(room_list)]
        concept = pool[rng.integers(len(pool))]
        box = _place_flush(interiors[room], OBJECT_SIZES[concept], taken, doors, rng)
        if box is None:
            continue
        taken.append(_planar(box))
        objects.append(SceneObject(concept, box, len(objects)))
    if len(objects) < 5:
        return None

    names = sorted({o.concept for o in objects})
    scene = SceneSpec(bounds=bounds, walls=tuple(walls), objects=tuple(objects), seed=seed,
                      concepts=concept_specs(names, seed), name=f"{difficulty}-{seed}")
    grid = NavGrid(scene)
    main, connected = _main_component(grid)
    if not connected:
        return None
    goals, tasks = _tasks_and_goals(scene, grid, main, list(interiors.values()), rng)
    if not goals:
        return None
    return _replace(scene, goal_sets=goals, tasks=tuple(tasks))


def _place_flush(interior, size, taken, doors, rng, attempts: int = 40) -> Box | None:
    x0, y0, x1, y1 = interior
    w = size[0]
    for _ in range(attempts):
        side = int(rng.integers(4))
        lo, hi = (x0, x1) if side < 2 else (y0, y1)
        if hi - lo < w + 0.1:
            continue
        box = _flush_box(interior, side, rng.uniform(lo + w / 2 + 0.05, hi - w / 2 - 0.05), size)
        fp = _planar(box)
        if any(_rect_distance(fp, o) < OBJECT_GAP for o in taken):
            continue
        if any(_rect_distance(fp, d.rect) < DOOR_CLEARANCE for d in doors):
            continue
        return box
    return None


# ---------------------------------------------------------------- hub and spoke layouts

def _rotate_box(box: Box, quarter_turns: int) -> Box:
    pts = np.array([[box.lo[0], box.lo[1]], [box.hi[0], box.hi[1]]])
    for _ in range(quarter_turns % 4):
        pts = np.stack([-pts[:, 1], pts[:, 0]], axis=1)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return Box((lo[0], lo[1], box.lo[2]), (hi[0], hi[1], box.hi[2]))


@dataclass(frozen=True)
class _HubLayout:
    hub: float        # hub interior half-width
    corridor: float   # corridor interior length
    depth: float      # end room interior depth (along the branch)
    half_room: float  # end room interior half-width
    half_corr: float = 0.6

    @property
    def room_start(self) -> float:
        return self.hub + 2 * WALL_T + self.corridor

    @property
    def extent(self) -> float:
        return self.room_start + self.depth + WALL_T

    def east_walls(self) -> list[Box]:
        """Walls of the east branch (hub east wall, corridor, end room)."""
        h, a, d, r, c = self.hub, self.room_start, self.depth, self.half_room, self.half_corr
        t = WALL_T
        out = _wall_line(False, h + t / 2, -h - t, h + t, [(0.0, 2 * c)])
        out += _wall_line(True, c + t / 2, h, a, [])
        out += _wall_line(True, -c - t / 2, h, a, [])
        out += _wall_line(False, a - t / 2, -r - t, r + t, [(0.0, 2 * c)])
        out += _wall_line(False, a + d + t / 2, -r - t, r + t, [])
        out += _wall_line(True, r + t / 2, a - t, a + d + t, [])
        out += _wall_line(True, -r - t / 2, a - t, a + d + t, [])
        return out

    def room_interior(self):
        return (self.room_start, -self.half_room, self.room_start + self.depth, self.half_room)

    def hub_interior(self):
        return (-self.hub, -self.hub, self.hub, self.hub)


def _hub_layout(rng) -> _HubLayout:
    return _HubLayout(hub=2.0, corridor=float(rng.uniform(3.2, 3.5)), depth=float(rng.uniform(3.4, 3.7)),
                      half_room=2.5)


def _far_panel(layout: _HubLayout) -> Box:
    a, d = layout.room_start, layout.depth
    return Box((a + d - 0.4, -0.8, 0.0), (a + d, 0.8, 2.0))


def _side_box(layout: _HubLayout, concept: str, along: float, north: bool) -> Box:
    w, dep, z0, z1 = OBJECT_SIZES[concept]
    r = layout.half_room
    y0, y1 = (r - dep, r) if north else (-r, -r + dep)
    return Box((along - w / 2, y0, z0), (along + w / 2, y1, z1))


def _hub_corner_objects(layout: _HubLayout, concepts, rng) -> list[tuple[str, Box]]:
    h = layout.hub
    out = []
    corners = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    for k, c in zip(rng.permutation(4)[: len(concepts)], concepts):
        sx, sy = corners[k]
        w, dep, z0, z1 = OBJECT_SIZES[c]
        s = max(w, dep)
        x = sx * (h - s / 2 - 0.05)
        y = sy * (h - s / 2 - 0.05)
        out.append((c, Box((x - s / 2, y - s / 2, z0), (x + s / 2, y + s / 2, z1))))
    return out


def _assemble(layout: _HubLayout, placed, seed: int, concepts: tuple[ConceptSpec, ...], name: str):
    walls = []
    for q in range(4):
        walls += [_rotate_box(b, q) for b in layout.east_walls()]
    e = layout.extent + 0.05
    bounds = Box((-e, -e, 0.0), (e, e, CEILING))
    objects = tuple(SceneObject(c, b, i) for i, (c, b) in enumerate(placed))
    return SceneSpec(bounds=bounds, walls=tuple(walls), objects=objects, seed=seed, concepts=concepts, name=name)


def _hub_start(layout: _HubLayout, rng):
    return (float(rng.uniform(-0.4, 0.4)), float(rng.uniform(-0.4, 0.4)), float(rng.integers(24) * 15))


def _registry_seed(base: int, ok) -> int:
    """First derived embedding seed for which ``ok(registry_seed)`` holds."""
    for attempt in range(500):
        s = (int(base) * 1000003 + attempt) & 0x7FFFFFFFFFFFFFFF
        if ok(s):
            return s
    raise RuntimeError("no separable embedding seed found")


def build_beacon_scene(seed: int, relation_cos: float = 0.12) -> SceneSpec:
    """Hub with four branches; target semantics leak down exactly one of them.

    The beacon branch's end room has a context object on its far wall, in line
    with the corridor, whose visual embedding has cosine ``relation_cos`` with the
    target query (below the detection threshold). The target stands in a far
    corner of the same room, against a side wall, hidden from the hub.
    """
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0xBEAC0])
    layout = _hub_layout(rng)
    target = BEACON_TARGETS[rng.integers(len(BEACON_TARGETS))]
    others = [c for c in sorted(OBJECT_SIZES)
              if c != target and OBJECT_SIZES[c][1] <= 0.8 and OBJECT_SIZES[c][0] <= 1.8]
    picks = list(rng.permutation(len(others))[:8])
    far_concepts = [others[k] for k in picks[:3]]
    side_concepts = [others[k] for k in picks[3:6]]
    hub_concepts = [c for c in (others[k] for k in picks[6:8]) if max(OBJECT_SIZES[c][:2]) <= 0.6]
    beacon_branch = int(rng.integers(4))
    cue = f"{target} context"

    placed: list[tuple[str, Box]] = []
    a, d = layout.room_start, layout.depth
    k_other = 0
    target_id = None
    for q in range(4):
        north = bool(rng.random() < 0.5)
        if q == beacon_branch:
            # tucked into a far corner: in view from the corridor exit, out of view from the hub
            along = a + d - OBJECT_SIZES[target][0] / 2 - float(rng.uniform(0.1, 0.4))
            target_id = len(placed)
            placed.append((target, _rotate_box(_side_box(layout, target, along, north), q)))
            placed.append((cue, _rotate_box(_far_panel(layout), q)))
        else:
            sc = side_concepts[k_other]
            along = float(rng.uniform(a + 1.3, a + d - 0.9))
            placed.append((sc, _rotate_box(_side_box(layout, sc, along, north), q)))
            placed.append((far_concepts[k_other], _rotate_box(_far_panel(layout), q)))
            k_other += 1
    placed += _hub_corner_objects(layout, hub_concepts, rng)

    names = [c for c, _ in placed if c != cue]

    def separable(s):
        reg = ConceptRegistry(concept_specs(names, s), seed=s)
        q = reg.query(target)
        return all(abs(float(reg.visual(c) @ q)) <= DISTRACTOR_MAX_COS
                   for c in list(STRUCTURAL_CONCEPTS) + names if c != target)

    reg_seed = _registry_seed(seed, separable)
    concepts = concept_specs(names, reg_seed) + (ConceptSpec(cue, reg_seed, relates_to=target,
                                                             relation_cos=relation_cos),)
    scene = _assemble(layout, placed, reg_seed, concepts, f"beacon-{seed}")
    grid = NavGrid(scene)
    main, _ = _main_component(grid)
    goals = {target: viewpoints(grid, scene.object(target_id).box, main)}
    task = Task("objectnav", target, _hub_start(layout, rng), target_id)
    return _replace(scene, goal_sets=goals, tasks=(task,))


def build_decoy_scene(seed: int) -> SceneSpec:
    """Two instances of the target noun; only the hidden one has the instructed landmarks.

    The decoy stands on the far wall of one end room, in line with its corridor
    and visible from the start. The true instance and two landmark objects sit
    against a side wall of the opposite end room, out of sight of the hub.
    """
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0xDEC0])
    layout = _hub_layout(rng)
    target = DECOY_TARGETS[rng.integers(len(DECOY_TARGETS))]
    lm_pool = [c for c in LANDMARKS if c != target and OBJECT_SIZES[c][0] <= 0.8]
    lm_idx = rng.permutation(len(lm_pool))[:2]
    landmarks = [lm_pool[k] for k in lm_idx]
    others = [c for c in sorted(OBJECT_SIZES)
              if c != target and c not in landmarks and c not in LANDMARKS
              and OBJECT_SIZES[c][1] <= 0.8 and OBJECT_SIZES[c][0] <= 1.8]
    picks = list(rng.permutation(len(others))[:5])
    filler = [others[k] for k in picks]
    n_attr = int(rng.integers(0, 3))
    attrs = [ATTRIBUTES[k] for k in sorted(rng.permutation(len(ATTRIBUTES))[:n_attr])]
    if "large" in attrs and "small" in attrs:
        attrs.remove("small")
    phrase = " ".join(attrs + [target])
    template = INSTRUCTION_TEMPLATES[rng.integers(len(INSTRUCTION_TEMPLATES))]
    instruction = template.format(t=phrase, a=landmarks[0], b=landmarks[1])

    decoy_branch = int(rng.integers(4))
    true_branch = (decoy_branch + 2) % 4
    a, d = layout.room_start, layout.depth
    placed: list[tuple[str, Box]] = []
    decoy_id = true_id = None
    k = 0
    for q in range(4):
        if q == decoy_branch:
            decoy_id = len(placed)
            w, dep, z0, z1 = OBJECT_SIZES[target]
            panel = Box((a + d - dep, -w / 2, z0), (a + d, w / 2, z1))
            placed.append((target, _rotate_box(panel, q)))
            placed.append((filler[k], _rotate_box(_side_box(layout, filler[k], a + d / 2, bool(rng.random() < 0.5)), q)))
            k += 1
        elif q == true_branch:
            north = bool(rng.random() < 0.5)
            w_t = OBJECT_SIZES[target][0]
            lw0, lw1 = OBJECT_SIZES[landmarks[0]][0], OBJECT_SIZES[landmarks[1]][0]
            gap = 0.1
            span = lw0 + w_t + lw1 + 2 * gap
            start = a + (d - span) / 2
            along = start + lw0 + gap + w_t / 2
            true_id = len(placed)
            placed.append((target, _rotate_box(_side_box(layout, target, along, north), q)))
            placed.append((landmarks[0], _rotate_box(_side_box(layout, landmarks[0], start + lw0 / 2, north), q)))
            placed.append((landmarks[1], _rotate_box(
                _side_box(layout, landmarks[1], start + span - lw1 / 2, north), q)))
            placed.append((filler[k], _rotate_box(_far_panel(layout), q)))
            k += 1
        else:
            placed.append((filler[k], _rotate_box(_far_panel(layout), q)))
            k += 1

    names = [c for c, _ in placed]
    lexicon = load_lexicon()

    def separable(s):
        reg = ConceptRegistry(concept_specs(names, s), seed=s)
        q = reg.query(target, attrs)
        non_target = [c for c in list(STRUCTURAL_CONCEPTS) + names if c != target]
        if any(abs(float(reg.visual(c) @ q)) > DISTRACTOR_MAX_COS for c in non_target):
            return False
        for lm in landmarks:
            embs = [reg.text(lm)] + [reg.synonym(lm, v, 0.7) for v in lexicon.get(lm, [])]
            for c in list(STRUCTURAL_CONCEPTS) + names:
                if c in landmarks:
                    continue
                v = reg.visual(c)
                if any(float(v @ e) > LANDMARK_MAX_COS for e in embs):
                    return False
        return True

    reg_seed = _registry_seed(seed, separable)
    scene = _assemble(layout, placed, reg_seed, concept_specs(names, reg_seed), f"decoy-{seed}")
    grid = NavGrid(scene)
    main, _ = _main_component(grid)
    true_pts = viewpoints(grid, scene.object(true_id).box, main)
    decoy_pts = viewpoints(grid, scene.object(decoy_id).box, main)
    goals = {instruction: true_pts, target: true_pts + decoy_pts, "decoy": decoy_pts}
    task = Task("vln", instruction, _hub_start(layout, rng), true_id)
    return _replace(scene, goal_sets=goals, tasks=(task,))


def decoy_instance(scene: SceneSpec) -> SceneObject:
    """The decoy object of a scene built by ``build_decoy_scene``."""
    task = scene.tasks[0]
    target = scene.object(task.target_instance).concept
    for o in scene.objects:
        if o.concept == target and o.instance_id != task.target_instance:
            return o
    raise InvalidArgument("scene has no decoy instance")
