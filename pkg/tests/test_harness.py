import json
import math

import numpy as np
import pytest

from r2f.config import R2FConfig
from r2f.errors import ConfigurationError, InvalidArgument
from r2f.harness import (EpisodeError, EpisodeResult, EpisodeSpec, compute_sr, compute_spl, run_batch, run_episode,
                         step_rng, write_results, write_trace)
from r2f.sim import Action, generate_scene
from scenes import goal_room


class Scripted:
    """Fixed action sequence, then a fixed fallback action."""

    def __init__(self, actions=(), then=Action.TURN_LEFT):
        self.actions = list(actions)
        self.then = then
        self.outcome = None
        self.info = {}

    def act(self, obs, grid, regions, step_index, synced=False):
        a = self.actions[step_index] if step_index < len(self.actions) else self.then
        if a is Action.STOP:
            self.outcome = "stopped"
        return a


def spec_for(scene, **kw):
    return EpisodeSpec(scene, scene.tasks[0].start, "objectnav", scene.tasks[0].query, **kw)


def test_immediate_stop_near_goal_succeeds():
    scene = goal_room(distance=1.0)
    res = run_episode(spec_for(scene), policy=Scripted([Action.STOP]))
    assert res.success and res.outcome == "stopped_at_goal"
    assert res.executed_length == 0.0 and res.steps == 1
    assert res.optimal_length == pytest.approx(1.0, abs=0.15)


def test_stop_far_from_goal_fails():
    scene = goal_room(distance=2.5)
    res = run_episode(spec_for(scene), policy=Scripted([Action.STOP]))
    assert not res.success and res.outcome == "stopped_wrong"


def test_start_at_goal_has_positive_optimal_length():
    scene = goal_room(distance=0.0)
    res = run_episode(spec_for(scene), policy=Scripted([Action.STOP]))
    assert res.success and res.optimal_length > 0
    assert compute_spl([res]) == pytest.approx(1.0)


def test_never_stopping_exhausts_the_budget():
    scene = goal_room(distance=2.0)
    res = run_episode(spec_for(scene), policy=Scripted())
    assert res.steps == 1000 and res.outcome == "budget_exhausted" and not res.success
    assert res.frontier_updates == math.ceil(1000 / 5)


def test_executed_length_sums_displacements():
    scene = goal_room(distance=2.5)
    acts = [Action.FORWARD] * 4 + [Action.TURN_LEFT] * 2 + [Action.STOP]
    res = run_episode(spec_for(scene), policy=Scripted(acts), trace=True)
    assert res.executed_length == pytest.approx(1.0)
    xs = [(r["x"], r["y"]) for r in res.trace]
    assert res.executed_length == pytest.approx(sum(math.dist(a, b) for a, b in zip(xs, xs[1:])))
    assert res.success
    assert [r["frontier_update"] for r in res.trace] == [t % 5 == 0 for t in range(7)]


@pytest.mark.parametrize("steps", [1, 4, 5, 6, 23])
def test_frontier_update_count(steps):
    scene = goal_room(distance=2.5)
    acts = [Action.TURN_LEFT] * (steps - 1) + [Action.STOP]
    res = run_episode(spec_for(scene), policy=Scripted(acts))
    assert res.steps == steps and res.frontier_updates == math.ceil(steps / 5)


def result(success, L=1.0, L_star=1.0):
    return EpisodeResult("e", success, 10, L, L_star, 0.0, "stopped_at_goal" if success else "stopped_wrong",
                         (0.0, 0.0))


def test_success_rate_and_spl():
    assert compute_sr([result(True)] * 3 + [result(False)]) == 0.75
    assert compute_spl([result(True, 8.0, 4.0)]) == pytest.approx(0.5)
    assert compute_spl([result(False, 1.0, 4.0), result(False, 100.0, 4.0)]) == 0.0
    assert compute_spl([result(True, 0.0, 1e-9)]) == pytest.approx(1.0)
    for fn in (compute_sr, compute_spl):
        with pytest.raises(InvalidArgument):
            fn([])


def test_bad_spec_is_a_configuration_error():
    scene = goal_room()
    with pytest.raises(ConfigurationError):
        run_episode(EpisodeSpec(scene, scene.tasks[0].start, "teleport", "chair"))
    with pytest.raises(ConfigurationError):
        run_episode(EpisodeSpec(scene, scene.tasks[0].start, "objectnav", "chair", policy="oracle"))


def test_step_rng_depends_only_on_its_key():
    a = step_rng(7, 3, 1).random(4)
    assert np.array_equal(a, step_rng(7, 3, 1).random(4))
    assert not np.array_equal(a, step_rng(7, 4, 1).random(4))
    assert not np.array_equal(a, step_rng(8, 3, 1).random(4))


def test_batch_records_errors_without_aborting(tmp_path):
    scene = goal_room(distance=1.0)
    good = spec_for(scene, episode_id="good")
    bad = EpisodeSpec(str(tmp_path / "missing.json"), (0, 0, 0), "objectnav", "chair", episode_id="bad")
    cfg = R2FConfig(t_max=40)
    report = run_batch([good, bad], cfg)
    assert isinstance(report.results[0], EpisodeResult)
    assert isinstance(report.results[1], EpisodeError) and report.results[1].episode_id == "bad"
    assert len(report.errors) == 1
    summary = report.summary()
    assert summary["episodes"] == 2 and summary["errors"] == 1
    path = write_results(report, tmp_path / "out" / "results.jsonl")
    lines = (tmp_path / "out" / "results.jsonl").read_text().splitlines()
    assert json.loads(lines[1])["error"]
    assert json.loads(path.read_text())["errors"] == 1


def test_r2f_finds_a_visible_object():
    scene = goal_room(distance=2.0)
    res = run_episode(spec_for(scene), R2FConfig(t_max=200))
    assert res.success, res.outcome


def test_trace_file_layout(tmp_path):
    scene = generate_scene(2)
    spec = spec_for(scene, seed=4)
    cfg = R2FConfig(t_max=15)
    res = run_episode(spec, cfg, trace=True)
    path = tmp_path / "trace.jsonl"
    write_trace(res, spec, cfg, path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert lines[0]["config"]["t_max"] == 15 and lines[0]["spec"]["seed"] == 4
    assert [r["step"] for r in lines[1:]] == list(range(res.steps))
    again = run_episode(spec, cfg, trace=True)
    assert again.trace == res.trace
