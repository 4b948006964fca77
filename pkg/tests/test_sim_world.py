import math

import numpy as np
import pytest

from oracles import bfs_geodesic
from r2f.embedding import cosine
from r2f.errors import DisconnectedError, InvalidArgument, RenderError
from r2f.sim import (Action, AgentState, Box, CameraModel, SceneSpec, generate_scene, geodesic_distance, nav_grid,
                     render, step)
from r2f.sim.generate import _main_component, viewpoints
from r2f.sim.geodesic import geodesic_to_set
from scenes import corridor, l_corridor, room, wall_ahead

CAM = CameraModel()


def test_wall_one_metre_ahead():
    scene = wall_ahead(1.0)
    obs = render(scene, AgentState(0.0, 0.0, 0.0), CAM)
    h, w = obs.depth.shape
    centre = obs.depth[h // 2 - 1:h // 2 + 1, w // 2 - 1:w // 2 + 1]
    assert np.all(np.abs(centre - 1.0) <= 0.05)
    assert not obs.oor_mask.any()
    assert np.all(obs.depth <= CAM.r_max)


def test_long_corridor_is_out_of_range_and_carries_far_semantics():
    scene = corridor(8.0, far_object="chair")
    q = scene.registry.query("chair")
    clean = render(scene, AgentState(0.5, 0.0, 0.0), CAM, noise_sigma=0.0)
    h, w = clean.depth.shape
    r, c = h // 2, w // 2
    assert clean.depth[r, c] == CAM.r_max
    assert clean.oor_mask[r, c]
    assert cosine(clean.features[r, c], q) == pytest.approx(0.18, abs=1e-9)
    noisy = render(scene, AgentState(0.5, 0.0, 0.0), CAM, noise_sigma=0.05, seed=3)
    assert cosine(noisy.features[r, c], q) >= 0.18 - 3 * 0.05
    assert np.array_equal(noisy.depth, clean.depth)


def test_render_is_deterministic_and_unit_norm():
    scene = generate_scene(3)
    x, y, yaw = scene.tasks[0].start
    a = render(scene, AgentState(x, y, yaw), CAM, noise_sigma=0.0)
    b = render(scene, AgentState(x, y, yaw), CAM, noise_sigma=0.0)
    assert np.array_equal(a.depth, b.depth) and np.array_equal(a.features, b.features)
    n = render(scene, AgentState(x, y, yaw), CAM, noise_sigma=0.05, seed=1)
    assert np.allclose(np.linalg.norm(n.features, axis=-1), 1.0, atol=1e-9)
    assert np.array_equal(n.depth, np.minimum(n.surface_range, CAM.r_max))
    assert np.array_equal(n.oor_mask, n.surface_range >= CAM.r_max)


def test_similarity_matches_materialised_features():
    scene = generate_scene(5)
    x, y, yaw = scene.tasks[0].start
    obs = render(scene, AgentState(x, y, yaw), CAM, noise_sigma=0.05, seed=2)
    q = scene.registry.query(scene.tasks[0].query)
    assert np.allclose(obs.similarity(q), obs.features @ q, atol=1e-12)
    assert np.allclose(obs.similarity_max(np.stack([q, -q])), [(obs.features @ q).max(), (-obs.features @ q).max()])


def test_render_inside_solid_raises():
    scene = corridor(5.0, far_object="chair")
    with pytest.raises(RenderError):
        render(scene, AgentState(4.85, 0.0, 0.0), CAM)


def test_render_leaves_scene_untouched():
    scene = generate_scene(1)
    before = scene.to_dict()
    x, y, yaw = scene.tasks[0].start
    s = AgentState(x, y, yaw)
    render(scene, s, CAM, 0.05, seed=0)
    step(scene, s, Action.FORWARD)
    assert scene.to_dict() == before


def test_step_forward_turns_and_collisions():
    scene = room(-1, -2, 4, 2)
    s = AgentState(0.0, 0.0, 0.0)
    fwd = step(scene, s, Action.FORWARD).state
    assert fwd.x == pytest.approx(0.25) and fwd.y == pytest.approx(0.0)
    near = AgentState(3.7, 0.0, 0.0)        # wall face at 4.0, disc radius 0.2
    res = step(scene, near, "forward")
    assert res.collided and res.state == near
    t = s
    for _ in range(24):
        t = step(scene, t, Action.TURN_LEFT).state
    assert t.yaw % 360 == pytest.approx(0.0)
    assert step(scene, s, Action.TURN_RIGHT).state.yaw == pytest.approx(345.0)
    stop = step(scene, s, Action.STOP)
    assert stop.stopped and stop.state == s


def test_geodesic_straight_corridor():
    scene = corridor(6.0)
    assert geodesic_distance(scene, (1.0, 0.0), (5.0, 0.0)) == pytest.approx(4.0, abs=0.15)
    assert geodesic_distance(scene, (1.0, 0.0), (1.0, 0.0)) == 0.0


def test_geodesic_l_corridor_against_bfs():
    scene = l_corridor(3.0, 4.0, w=0.6)
    a, b = (0.0, 0.0), (3.0, 4.0)
    d = geodesic_distance(scene, a, b)
    assert d == pytest.approx(7.0, abs=0.3)
    g = nav_grid(scene)
    assert d == pytest.approx(bfs_geodesic(g.free, g.cell, g.snap(a), g.snap(b)), abs=1e-9)


def test_geodesic_symmetry_and_triangle():
    scene = generate_scene(2)
    g = nav_grid(scene)
    rng = np.random.default_rng(0)
    cells = np.argwhere(g.free & (g.components == _main_component(g)[0]))
    pts = [g.center(*cells[k]) for k in rng.choice(len(cells), 6, replace=False)]
    for a in pts:
        for b in pts:
            assert geodesic_distance(scene, a, b) == pytest.approx(geodesic_distance(scene, b, a), abs=1e-9)
            assert geodesic_distance(scene, a, b) >= np.linalg.norm(a - b) - 2 * g.cell
            for c in pts:
                assert geodesic_distance(scene, a, c) <= (geodesic_distance(scene, a, b)
                                                          + geodesic_distance(scene, b, c) + 2 * g.cell)


def test_geodesic_errors():
    scene = room(0, 0, 6, 2, extra_walls=[Box((2.9, 0, 0), (3.1, 2, 2.6))])
    with pytest.raises(DisconnectedError):
        geodesic_distance(scene, (1.0, 1.0), (5.0, 1.0))
    with pytest.raises(InvalidArgument):
        geodesic_distance(scene, (3.0, 1.0), (1.0, 1.0))
    assert geodesic_to_set(scene, (1.0, 1.0), [(5.0, 1.0), (2.0, 1.0)]) == pytest.approx(1.0, abs=0.1)


def test_generate_scene_is_deterministic():
    assert generate_scene(17, "medium").to_dict() == generate_scene(17, "medium").to_dict()
    assert generate_scene(17).to_dict() != generate_scene(18).to_dict()


def test_generated_scene_validators():
    for seed in range(20):
        s = generate_scene(seed, "small")
        xs = s.bounds.hi[0] - s.bounds.lo[0]
        ys = s.bounds.hi[1] - s.bounds.lo[1]
        assert xs <= 12.5 and ys <= 12.5
        assert 5 <= len(s.objects) <= 15
        assert s.goal_sets and s.tasks


def test_medium_scenes_connected():
    for seed in range(100):
        s = generate_scene(seed, "medium")
        g = nav_grid(s)
        labels = g.components[g.free]
        assert np.unique(labels).size == 1, seed
        assert s.bounds.hi[0] - s.bounds.lo[0] <= 20.5


def test_small_scene_objects_reachable_from_every_spawn():
    for seed in range(10):
        s = generate_scene(seed, "small")
        g = nav_grid(s)
        main, _ = _main_component(g)
        for task in s.tasks:
            for o in s.objects:
                vps = viewpoints(g, o.box, main)
                if not vps:
                    continue   # wedged in a corner with every face blocked
                assert geodesic_to_set(s, task.start[:2], [v[:2] for v in vps]) <= 20.0


def test_scene_round_trip(tmp_path):
    s = generate_scene(4)
    path = tmp_path / "s.json"
    s.save(path)
    back = SceneSpec.load(path)
    assert back.to_dict() == s.to_dict()
    x, y, yaw = s.tasks[0].start
    a = render(s, AgentState(x, y, yaw), CAM, 0.05, seed=1)
    b = render(back, AgentState(x, y, yaw), CAM, 0.05, seed=1)
    assert np.array_equal(a.features, b.features)


def test_camera_model_validation():
    with pytest.raises(InvalidArgument):
        CameraModel(hfov=180)
    with pytest.raises(InvalidArgument):
        CameraModel(r_max=0)
    cam = CameraModel()
    assert cam.focal == pytest.approx(80.0)
    d = cam.world_rays(90.0)[60, 80]
    assert math.degrees(math.atan2(d[1], d[0])) == pytest.approx(90.0, abs=1.0)
