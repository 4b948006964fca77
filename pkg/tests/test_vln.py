import numpy as np
import pytest

from r2f.config import R2FConfig
from r2f.embedding import ConceptRegistry, cosine, load_lexicon, make_related
from r2f.errors import UnparseableInstruction
from r2f.frontiers import FrontierRegion
from r2f.occupancy import VoxelGrid
from r2f.policy import Mode
from r2f.sim import Action, AgentState, CameraModel, generate_scene, render, step
from r2f.vln import (LandmarkSet, LandmarkVerifier, ParsedInstruction, expand_landmarks, landmark_maxima,
                     parse_instruction, prepare_instruction, verify_candidate, vln_policy)
from scenes import goal_room


def region(rid, centroid):
    return FrontierRegion(rid, np.asarray(centroid, dtype=float), np.zeros((1, 3), dtype=np.int64))


@pytest.mark.parametrize("text, head, attrs, landmarks", [
    ("king size bed located near the chest drawer, painting, curtain, and pillow", "bed", ("king", "size"),
     ("chest drawer", "painting", "curtain", "pillow")),
    ("a sink", "sink", (), ()),
    ("the round dark wooden table near the staircase", "table", ("round", "dark", "wooden"), ("staircase",)),
])
def test_parse_examples(text, head, attrs, landmarks):
    p = parse_instruction(text)
    assert (p.target_head, p.target_attributes, p.landmarks) == (head, attrs, landmarks)


@pytest.mark.parametrize("text, head, landmarks", [
    ("Find the chair next to the table", "chair", ("table",)),
    ("go to the sofa in front of the tv", "sofa", ("tv",)),
    ("locate a lamp beside the bed and the desk", "lamp", ("bed", "desk")),
    ("the toilet close to the sink", "toilet", ("sink",)),
])
def test_parse_relations_and_imperatives(text, head, landmarks):
    p = parse_instruction(text)
    assert p.target_head == head and p.landmarks == landmarks


def test_parse_rejects_empty_target():
    for text in ("", "the", "near the table", "find it"):
        with pytest.raises(UnparseableInstruction):
            parse_instruction(text)


def test_render_round_trip():
    for text in ("king size bed located near the chest drawer, painting, curtain, and pillow", "a sink",
                 "the round dark wooden table near the staircase", "Find the chair next to the table"):
        p = parse_instruction(text)
        assert parse_instruction(p.render()) == p
        assert parse_instruction(parse_instruction(p.render()).render()) == p


def test_expand_keeps_close_synonyms():
    reg = ConceptRegistry(["bed"], seed=0)
    lms = expand_landmarks(ParsedInstruction("bed", (), ("couch",)), load_lexicon(), reg)
    assert lms.landmarks[0].sources == ("couch", "sofa", "settee")
    assert lms.landmarks[0].embeddings.shape == (3, reg.dimension)


def test_expand_drops_distant_variants_and_caps_count():
    reg = ConceptRegistry(["bed"], seed=0)
    lexicon = {"lamp": [f"v{k}" for k in range(7)] + ["far"]}
    cos = {f"v{k}": 0.9 - 0.03 * k for k in range(7)}
    cos["far"] = 0.5

    def embed(lm, v):
        return make_related(reg.text(lm), cos[v], sorted(cos).index(v))

    lms = expand_landmarks(ParsedInstruction("bed", (), ("lamp",)), lexicon, reg, tau_syn=0.6, k_syn=5,
                           embed_variant=embed)
    assert lms.landmarks[0].sources == ("lamp", "v0", "v1", "v2", "v3")
    for src, e in zip(lms.landmarks[0].sources[1:], lms.landmarks[0].embeddings[1:]):
        assert cosine(e, reg.text("lamp")) == pytest.approx(cos[src], abs=1e-6)


def test_verification_without_landmarks_passes():
    assert verify_candidate([], LandmarkSet())
    assert LandmarkVerifier(LandmarkSet()).confirmed()


def test_visible_landmark_is_confirmed():
    scene = goal_room(concept="sink")
    setup = prepare_instruction("the chair near the sink", scene.registry)
    assert setup.parsed.landmarks == ("sink",)
    x, y, yaw = scene.tasks[0].start
    obs = render(scene, AgentState(x, y, yaw), CameraModel(), noise_sigma=0.0)
    assert landmark_maxima(obs, setup.landmarks)[0] == pytest.approx(0.18, abs=1e-6)
    assert verify_candidate([obs], setup.landmarks, tau_l=0.11)


def test_unrelated_landmarks_rarely_pass():
    # "unrelated": every concept in the scene is within 2/sqrt(D) of orthogonal to the landmark
    cam = CameraModel()
    trials = passes = 0
    k = 0
    while trials < 100:
        scene = generate_scene(k % 10, "small")
        setup = prepare_instruction(f"the chair near the zz{k}", scene.registry, lexicon={})
        e = setup.landmarks.landmarks[0].embeddings[0]
        k += 1
        if max(abs(scene.registry.visual(n) @ e) for n in scene.registry.names) >= 2 / np.sqrt(e.size):
            continue
        x, y, yaw = scene.tasks[0].start
        obs = render(scene, AgentState(x, y, yaw + 90 * (k % 4)), cam, noise_sigma=0.05, seed=k)
        passes += verify_candidate([obs], setup.landmarks, tau_l=0.11)
        trials += 1
    assert passes <= 1


def test_verified_detection_sweeps_a_full_turn():
    scene = goal_room(distance=1.0)
    cfg = R2FConfig(initial_spin=False)
    setup = prepare_instruction("chair near the window", scene.registry, cfg)
    pol = vln_policy(setup, cfg)
    s = AgentState(*scene.tasks[0].start)
    cam = CameraModel()
    grid = VoxelGrid()
    modes, actions = [], []
    for t in range(40):
        obs = render(scene, s, cam, noise_sigma=0.0)
        grid.integrate_observation(obs)
        a = pol.act(obs, grid, [region(0, (5.5, 1.5, 0.5))], t)
        modes.append(pol.state.mode)
        actions.append(a)
        if a is Action.STOP:
            break
        s = step(scene, s, a).state
    sweep = [a for m, a in zip(modes, actions) if m is Mode.SWEEP]
    assert len(sweep) == cfg.sweep_turns
    assert set(sweep) == {Action.TURN_LEFT}
    # no window anywhere, so the candidate is rejected and remembered
    assert len(pol.rejections) == 1
