import json
import math

import numpy as np
import pytest

import dehrl

ENV = json.dumps({"name": "overcooked", "encoding": "compact", "reward_level": 1, "goal": "any"})

SMALL_RUN = {
    "name": "smoke",
    "env": {"name": "overcooked", "encoding": "compact"},
    "hierarchy": {"levels": [{"actions": 16, "period": 1}, {"actions": 5, "period": 4}]},
    "network": {"policy_hidden": [16], "predictor_encoder": [16], "predictor_decoder": [16]},
    "ppo": {"horizon": 16, "minibatch_size": 32, "actors": 2},
    "budget": 2000,
    "seeds": [1],
    "checkpoint_interval": 1000,
}


def test_overcooked_moves_after_four_aligned_legs():
    env = dehrl.make_environment(ENV, seed=3)
    obs = env.reset()
    assert obs.shape == tuple(env.observation_shape)
    assert env.action_count == 16
    start = obs[0].copy()
    for leg in range(4):
        obs, reward, done = env.step(leg * 4)  # every leg up
    assert reward == 0.0 and not done
    r0, c0 = np.argwhere(start == 1.0)[0]
    r1, c1 = np.argwhere(obs[0] == 1.0)[0]
    assert (r1 - r0, c1 - c0) == (-1, 0)


def test_same_seed_same_trajectory():
    a = dehrl.make_environment(ENV, seed=9)
    b = dehrl.make_environment(ENV, seed=9)
    a.reset()
    b.reset()
    rng = np.random.default_rng(0)
    for act in rng.integers(0, 16, size=200):
        ra = a.step(int(act))
        rb = b.step(int(act))
        assert ra[1:] == rb[1:]
        assert a.hash() == b.hash()
        if ra[2]:
            a.reset()
            b.reset()


def test_distance_is_symmetric_and_zero_on_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.random((2, 4, 5))
        y = rng.random((2, 4, 5))
        assert dehrl.state_distance(x, x) == 0.0
        assert dehrl.state_distance(x, y) == pytest.approx(dehrl.state_distance(y, x), rel=1e-12)


def test_scores():
    rewards = [0.0] * 50 + [1.0] * 100
    assert dehrl.final_performance_score(rewards) == 1.0
    assert dehrl.learning_speed_score(rewards) == pytest.approx(100 / 150)
    with pytest.raises(ValueError):
        dehrl.final_performance_score([])


def test_config_errors_name_the_key():
    levels = [{"actions": 16, "period": 1}, {"actions": 5, "period": 4}, {"actions": 5, "period": 6}]
    bad = dict(SMALL_RUN, hierarchy={"levels": levels})
    with pytest.raises(dehrl.ConfigError, match="multiple"):
        dehrl.validate_config(json.dumps(bad))
    with pytest.raises(dehrl.ConfigError, match="bogus"):
        dehrl.validate_config(json.dumps(dict(SMALL_RUN, bogus=1)))
    info = dehrl.validate_config(json.dumps(SMALL_RUN))
    assert info["levels"] == 2 and info["action_count"] == 16


def test_agent_trains_and_probes():
    agent = dehrl.Agent(json.dumps(SMALL_RUN), seed=2)
    seen = []
    agent.set_episode_callback(lambda i, r: seen.append((i, r)))
    agent.step(600)
    assert agent.total_steps == 1200
    assert agent.episodes_finished == len(seen)
    assert [i for i, _ in seen] == list(range(len(seen)))
    h = agent.mean_policy_entropy(1)
    assert 0.0 < h <= math.log(5) + 1e-9
    labels = agent.probe(ENV, level=1, repeats=4)
    assert len(labels) == 5
    assert set(labels) <= {"north", "south", "east", "west", "stay", "other"}


def test_cli_verbs(tmp_path, monkeypatch):
    monkeypatch.setenv("DEHRL_OUTPUT_ROOT", str(tmp_path))
    cfg = tmp_path / "smoke.json"
    cfg.write_text(json.dumps(dict(SMALL_RUN, output_dir="runs/smoke")))
    code, out, err = dehrl.run(cfg)
    assert code == 0, err
    run_dir = tmp_path / "runs" / "smoke"
    metrics = (run_dir / "seed_1" / "metrics.txt").read_text()
    records = dehrl.read_metrics(metrics)
    assert records and all(isinstance(s, int) for s, _, _ in records)
    assert dehrl.run(cfg)[0] == 1
    code, out, _ = dehrl.probe(run_dir, 1, 4)
    assert code == 0 and out
    code, _, _ = dehrl.report(run_dir)
    assert code == 0
    svgs = list((run_dir / "report").glob("*.svg"))
    assert svgs and svgs[0].read_text().startswith("<svg")
    assert dehrl.resume(run_dir)[0] == 0


def test_missing_config_is_a_config_error(tmp_path):
    code, _, err = dehrl.run(tmp_path / "nope.json")
    assert code == 1 and err
