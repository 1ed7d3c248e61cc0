import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlforest.dataset import Dataset, normalize
from rlforest.env import EnvConfig, EnvError, ForestEnv, default_metric, threshold_from_action
from rlforest.metrics import score
from rlforest.tree import forest_from_text, forest_to_text


def four_points():
    return Dataset("four", np.array([[0.2], [0.4], [0.6], [0.8]]), np.array([0, 0, 1, 1]))


def random_env(seed, n=2, depth=2, M=3, N=40, metric="accuracy", sc0=0.0):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, N)
    y[:2] = [0, 1]
    d = normalize(Dataset("r", r.random((N, M)), y))
    return ForestEnv(EnvConfig(n, depth, M, metric, sc0), d), r


def random_actions(r, n, M):
    return [(int(r.integers(M)), float(r.uniform(-1, 1))) for _ in range(n)]


def test_encoding_lengths():
    d = normalize(Dataset("e", np.random.default_rng(0).random((10, 5)), np.arange(10) % 2))
    env = ForestEnv(EnvConfig(3, 3, 5), d)
    s, obs = env.reset(0)
    assert env.cfg.max_timestep == 7
    assert len(obs) == 3 and all(o.size == 17 for o in obs)
    assert s.size == 33


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 6))
def test_encoding_lengths_closed_form(n, depth, M):
    cfg = EnvConfig(n, depth, M)
    T = 2 ** depth - 1
    assert cfg.max_timestep == T
    assert cfg.obs_dim == M + 1 + 2 + 2 + T
    assert cfg.state_dim == n * (M + 3) + 2 + T


def test_reset_observation_is_root_placement():
    env, _ = random_env(1, n=2, M=3)
    s, obs = env.reset(0)
    M, T = 3, 3
    for o in obs:
        assert not o[:M + 1].any()
        assert o[M + 1:M + 3].tolist() == [1.0, 0.0]
        assert o[M + 3:M + 5].tolist() == [0.0, 0.0]
        assert o[M + 5:].tolist() == [1.0] + [0.0] * (T - 1)


def test_single_split_reward_is_one():
    env = ForestEnv(EnvConfig(1, 1, 1, "accuracy", 0.0), four_points())
    env.reset(0)
    res = env.step([(0, 0.0)])  # threshold (0 + 1) / 2 = 0.5
    assert threshold_from_action(0.0) == 0.5
    assert res.reward == 1.0 and res.score == 1.0 and res.done
    assert not res.next_state.any()


def test_observation_reports_actual_parent():
    env, _ = random_env(2, n=2, M=3)
    env.reset(0)
    res = env.step([(2, 0.5), (1, -0.5)])
    M = 3
    for i, (k, thr) in enumerate([(2, 0.75), (1, 0.25)]):
        o = res.next_observations[i]
        assert o[:M].tolist() == [1.0 if j == k else 0.0 for j in range(M)]
        assert o[M] == thr
        assert o[M + 1:M + 3].tolist() == [0.0, 1.0]
        assert o[M + 3:M + 5].tolist() == [1.0, 0.0]  # node 1 is a left child
        assert o[M + 5 + 1] == 1.0
    pos = [o[M + 3:] for o in res.next_observations]
    assert np.array_equal(pos[0], pos[1])
    assert np.array_equal(res.next_state[-(2 + 3):], pos[0])


@given(st.integers(0, 2**32), st.sampled_from(["accuracy", "g_mean"]), st.sampled_from([0.0, 0.5]))
def test_rewards_telescope(seed, metric, sc0):
    env, r = random_env(seed, n=2, depth=3, metric=metric, sc0=sc0)
    env.reset(seed)
    rewards, res = [], None
    while not env.done:
        res = env.step(random_actions(r, 2, 3))
        rewards.append(res.reward)
        assert 0.0 <= res.score <= 1.0
    assert abs(sum(rewards) - (res.score - sc0)) <= 1e-12
    forest = env.extract_forest()
    assert score(metric, forest.predict(env.data.features), env.data.labels) == res.score


def test_transition_is_deterministic():
    env, r = random_env(3, n=3, depth=2)
    acts = [random_actions(r, 3, 3) for _ in range(3)]
    runs = []
    for _ in range(2):
        env.reset(7)
        runs.append([env.step(a).reward for a in acts])
        runs[-1].append(env.trace_text())
    assert runs[0] == runs[1]


def test_frozen_node_is_inert():
    # root at 0.5 leaves the left child pure; agent 1 keeps splitting usefully
    X = np.array([[0.1, 0.1], [0.2, 0.9], [0.3, 0.5], [0.6, 0.2], [0.7, 0.8], [0.9, 0.3]])
    y = np.array([0, 0, 0, 1, 0, 1])
    d = Dataset("frz", X, y)
    env = ForestEnv(EnvConfig(1, 2, 2, "accuracy"), d)
    env.reset(0)
    env.step([(0, 0.0)])
    before = env._forest.predict(X).copy()
    res = env.step([(1, 0.0)])  # addressed to the frozen left child
    assert np.array_equal(env._forest.predict(X), before)
    assert res.reward == 0.0
    res = env.step([(1, 0.0)])  # right child {0.6: 1, 0.7: 0, 0.9: 1} split on x1 at 0.5
    # oracle: left leaf 0; right side x1 <= 0.5 -> {3, 5} both positive, x1 > 0.5 -> {4} negative
    expect = np.array([0, 0, 0, 1, 0, 1])
    assert np.array_equal(env.extract_forest().predict(X), expect)
    assert res.score == 1.0


def test_step_after_done_and_mismatch_errors():
    env = ForestEnv(EnvConfig(1, 1, 1), four_points())
    with pytest.raises(EnvError):
        env.step([(0, 0.0)])
    env.reset(0)
    with pytest.raises(EnvError):
        env.extract_forest()
    env.step([(0, 0.0)])
    with pytest.raises(EnvError, match="done"):
        env.step([(0, 0.0)])
    with pytest.raises(EnvError, match="attributes"):
        ForestEnv(EnvConfig(1, 1, 2), four_points())
    with pytest.raises(EnvError, match="normalized"):
        ForestEnv(EnvConfig(1, 1, 1), Dataset("raw", np.array([[3.0], [1.0]]), np.array([0, 1])))


def test_extracted_forest_round_trip_and_single_agent():
    env, r = random_env(4, n=1, depth=2)
    env.reset(0)
    while not env.done:
        env.step(random_actions(r, 1, 3))
    f = env.extract_forest()
    pts = r.random((100, 3))
    assert np.array_equal(forest_from_text(forest_to_text(f)).predict(pts), f.predict(pts))
    assert np.array_equal(f.predict(pts), f.trees[0].predict(pts))


def test_bootstrap_switch_changes_members():
    r = np.random.default_rng(0)
    d = normalize(Dataset("b", r.random((30, 2)), np.arange(30) % 2))
    env = ForestEnv(EnvConfig(2, 1, 2, bootstrap=True), d)
    env.reset(3)
    assert not np.array_equal(env.members[0], env.members[1])


def test_default_metric_by_imbalance():
    bal = Dataset("b", np.zeros((4, 1)), np.array([0, 1, 0, 1]))
    imb = Dataset("i", np.zeros((4, 1)), np.array([0, 0, 0, 1]))
    assert default_metric(bal) == "accuracy" and default_metric(imb) == "g_mean"
