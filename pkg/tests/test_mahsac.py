import numpy as np
import pytest

from conftest import blobs
from rlforest.dataset import Dataset, normalize
from rlforest.env import EnvConfig, ForestEnv
from rlforest.mahsac import (MAHSAC, ReplayBuffer, TrainConfig, TrainError, Transition,
                             make_batch, train)
from rlforest.nn import Mlp, log_softmax, softmax, split_head, squashed_log_prob


def tiny(n=2, M=3, depth=2, **kw):
    kw.setdefault("hidden", (4,))
    kw.setdefault("warmup", 0)
    return MAHSAC(EnvConfig(n, depth, M), TrainConfig(**kw))


def random_batch(tr, B, r):
    ec = tr.env_cfg
    n, K = ec.n_agents, tr.K
    return {
        "s": r.random((B, ec.state_dim)),
        "o": r.random((B, n, ec.obs_dim)),
        "k": r.integers(0, K, (B, n)),
        "a_c": r.uniform(-0.9, 0.9, (B, n, K)),
        "r": r.normal(size=B),
        "s2": r.random((B, ec.state_dim)),
        "o2": r.random((B, n, ec.obs_dim)),
        "done": (r.random(B) < 0.3).astype(float),
    }


def constant_output(net, values):
    """Make the final layer ignore its input and emit ``values``."""
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = values


def test_critic_target_worked_example():
    tr = tiny(n=1, M=2, alpha_d=0.0, alpha_c=0.0, gamma=0.9)
    ag = tr.agents[0]
    constant_output(ag.actor, [1000.0, -1000.0, 0, 0, 0, 0])
    for t in ag.targets:
        constant_output(t, [1.0, 7.0])
    b = random_batch(tr, 3, np.random.default_rng(0))
    b["r"][:] = 0.5
    b["done"][:] = [0.0, 1.0, 0.0]
    y = tr.critic_target(b, 0)
    assert y.tolist() == pytest.approx([1.4, 0.5, 1.4], abs=1e-12)
    assert y[1] == 0.5


def test_closed_form_expectation_matches_monte_carlo():
    r = np.random.default_rng(1)
    tr = tiny(n=1, M=3, gamma=0.5)
    ag, cfg = tr.agents[0], tr.cfg
    b = random_batch(tr, 1, r)
    eps = r.standard_normal((1, 3))
    y = tr.critic_target(b, 0, eps)
    # independent evaluation of every discrete branch, then sample branches
    logits, mu, ls, _ = split_head(ag.actor.forward(b["o2"][0, 0]), 3)
    p = softmax(logits)
    a = np.tanh(mu + np.exp(ls) * eps[0])
    lc = squashed_log_prob(eps[0], ls, a)
    x = np.concatenate([b["s2"][0], a])
    q = np.minimum(ag.targets[0].forward(x), ag.targets[1].forward(x))
    branch = q - cfg.alpha_d * log_softmax(logits) - cfg.alpha_c * p * lc
    draws = r.choice(3, size=100_000, p=p)
    mc = b["r"][0] + cfg.gamma * (1 - b["done"][0]) * branch[draws].mean()
    assert abs(y[0] - mc) < 0.01


def test_min_of_two_targets():
    r = np.random.default_rng(2)
    tr = tiny(n=2, M=3, alpha_d=0.0, alpha_c=0.0, gamma=0.9)
    b = random_batch(tr, 16, r)
    b["done"][:] = 0.0
    eps = r.standard_normal((16, 3))
    y = tr.critic_target(b, 1, eps)
    ag = tr.agents[1]
    logits, mu, ls, _ = split_head(ag.actor.forward(b["o2"][:, 1]), 3)
    x = np.concatenate([b["s2"], np.tanh(mu + np.exp(ls) * eps)], axis=1)
    for t in ag.targets:
        bound = b["r"] + 0.9 * np.sum(softmax(logits) * t.forward(x), axis=1)
        assert np.all(y <= bound + 1e-12)


def test_critic_loss_decreases_on_fixed_target():
    r = np.random.default_rng(3)
    tr = tiny(critic_lr=1e-2, hidden=(16, 16))
    b = random_batch(tr, 32, r)
    y = r.normal(size=32)
    losses = [tr.update_critics(b, 0, y) for _ in range(100)]
    assert losses[-1][0] < 0.5 * losses[0][0] and losses[-1][1] < 0.5 * losses[0][1]


def test_zero_residual_leaves_critics_unchanged():
    r = np.random.default_rng(4)
    tr = tiny()
    ag = tr.agents[0]
    ag.critics[1] = ag.critics[0].copy()
    b = random_batch(tr, 8, r)
    x = np.concatenate([b["s"], b["a_c"][:, 0]], axis=1)
    y = ag.critics[0].forward(x)[np.arange(8), b["k"][:, 0]]
    before = [p.copy() for p in ag.critics[0].params]
    losses = tr.update_critics(b, 0, y)
    assert losses == (0.0, 0.0)
    assert all(np.array_equal(p, q) for p, q in zip(before, ag.critics[0].params))


def test_single_sample_loss_definition():
    r = np.random.default_rng(5)
    tr = tiny()
    b = random_batch(tr, 1, r)
    x = np.concatenate([b["s"], b["a_c"][:, 0]], axis=1)
    qhat = tr.agents[0].critics[0].forward(x)[0, b["k"][0, 0]]
    loss, _ = tr.critic_loss_and_grads(b, 0, np.array([2.5]), 0)
    assert loss == pytest.approx(0.5 * (qhat - 2.5) ** 2, rel=1e-12)


def _fd_grads(net, f, h=1e-5):
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            fp = f()
            p[idx] = old - h
            fm = f()
            p[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def _rel_err(a, b):
    a = np.concatenate([g.ravel() for g in a])
    b = np.concatenate([g.ravel() for g in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def gradient_check(seed):
    """Worst relative error of (actor, critic) analytic gradients vs central differences."""
    r = np.random.default_rng(seed)
    M = int(r.integers(2, 5))
    tr = tiny(n=int(r.integers(1, 3)), M=M, depth=1, hidden=(int(r.integers(2, 5)),),
              alpha_d=float(r.uniform(0, 1)), alpha_c=float(r.uniform(0, 1)),
              q_coef=float(r.choice([1.0, 2.0])), seed=int(seed))
    i = int(r.integers(tr.env_cfg.n_agents))
    b = random_batch(tr, int(r.integers(1, 5)), r)
    eps = r.standard_normal((len(b["r"]), M))
    ag = tr.agents[i]
    _, ga = tr.actor_loss_and_grads(b["s"], b["o"][:, i], eps, i)
    fa = _fd_grads(ag.actor, lambda: tr.actor_loss_and_grads(b["s"], b["o"][:, i], eps, i)[0])
    y = r.normal(size=len(b["r"]))
    _, gc = tr.critic_loss_and_grads(b, i, y, 1)
    fc = _fd_grads(ag.critics[1], lambda: tr.critic_loss_and_grads(b, i, y, 1)[0])
    return _rel_err(ga, fa), _rel_err(gc, fc)


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    ea, ec = gradient_check(1000 + seed)
    assert ea < 1e-3 and ec < 1e-3


def test_entropy_pushes_policy_toward_uniform():
    r = np.random.default_rng(6)
    tr = tiny(n=1, M=4, alpha_d=5.0, alpha_c=0.0, actor_lr=1e-2)
    ag = tr.agents[0]
    ag.critics = [Mlp.zeros(c.sizes) for c in ag.critics]
    ag.actor.biases[-1][:4] = [3.0, 0.0, -1.0, -2.0]
    b = random_batch(tr, 16, r)

    def kl_uniform():
        p = softmax(split_head(ag.actor.forward(b["o"][:, 0]), 4)[0])
        return float(np.mean(np.sum(p * np.log(4 * p), axis=1)))

    start = kl_uniform()
    trace = []
    for _ in range(50):
        tr.update_actor(b, 0)
        trace.append(kl_uniform())
    assert trace[-1] < 0.1 * start
    assert np.mean(trace[25:]) < np.mean(trace[:25]) < start


def test_bandit_convergence():
    r = np.random.default_rng(7)
    tr = tiny(n=1, M=3, alpha_d=0.0, alpha_c=0.0, hidden=(64, 64))
    ag = tr.agents[0]
    for c in ag.critics:
        constant_output(c, [1.0, 0.0, 0.0])
    b = random_batch(tr, 1, r)
    for _ in range(500):
        tr.update_actor(b, 0)
    p = ag.policy(b["o"][0, 0])[0]
    assert p[0] > 0.9


def test_actor_update_refused_during_warmup():
    tr = tiny(warmup=10)
    with pytest.raises(TrainError, match="warmup"):
        tr.update_actor(random_batch(tr, 2, np.random.default_rng(0)), 0)


def _transition(v):
    z = np.zeros(2)
    return Transition(z, np.zeros((1, 2)), np.zeros(1, int), np.zeros((1, 2)), float(v), z,
                      np.zeros((1, 2)), False)


def test_replay_buffer_fifo():
    buf = ReplayBuffer(5)
    for v in range(8):
        buf.push(_transition(v))
    assert len(buf) == 5
    assert [t.r for t in buf.items()] == [3.0, 4.0, 5.0, 6.0, 7.0]
    b = make_batch(buf.items())
    assert b["r"].tolist() == [3.0, 4.0, 5.0, 6.0, 7.0]
    with pytest.raises(TrainError):
        ReplayBuffer(3).sample(2, np.random.default_rng(0))


def blob_env(n=3, depth=2):
    X, y = blobs(40, seed=9)
    d = normalize(Dataset("blobs", X, y))
    return ForestEnv(EnvConfig(n, depth, 2, "accuracy", 0.5), d)


def short_config(**kw):
    base = dict(episodes=20, warmup=20, batch_size=16, hidden=(16,), seed=3)
    base.update(kw)
    return TrainConfig(**base)


def test_training_is_reproducible_and_telescopes():
    env = blob_env()
    runs = []
    for _ in range(2):
        seen = []
        res = train(env, short_config(), on_episode=seen.append)
        for rec in seen:
            assert abs(rec.total_reward - (rec.score - 0.5)) <= 1e-12
        runs.append(res.curve_text())
    assert runs[0] == runs[1]
    assert runs[0].splitlines()[0] == "episode,score,total_reward,actor_loss_mean,critic_loss_mean"


def test_zero_learning_rate_keeps_policy_fixed():
    env = blob_env()
    tr = MAHSAC(env.cfg, short_config(actor_lr=0.0, critic_lr=0.0))
    before = [[p.copy() for p in ag.actor.params] for ag in tr.agents]
    train(env, tr.cfg, trainer=tr)
    for ag, old in zip(tr.agents, before):
        assert all(np.array_equal(p, q) for p, q in zip(ag.actor.params, old))


def test_ctde_input_widths():
    env = blob_env(n=3)
    tr = MAHSAC(env.cfg, short_config(episodes=10))
    train(env, tr.cfg, trainer=tr)
    obs_dim, state_dim = env.cfg.obs_dim, env.cfg.state_dim
    assert obs_dim != state_dim + 2
    for ag in tr.agents:
        assert ag.actor.seen_input_widths == {obs_dim}
        for net in ag.critics + ag.targets:
            assert net.seen_input_widths == {state_dim + 2}


def test_checkpoint_round_trip(tmp_path):
    env = blob_env(n=2)
    tr = MAHSAC(env.cfg, short_config(episodes=5))
    train(env, tr.cfg, trainer=tr)
    tr.save(tmp_path)
    back = MAHSAC.load(tmp_path)
    assert back.cfg == tr.cfg and back.env_cfg == tr.env_cfg
    for a, b in zip(tr.agents, back.agents):
        for role, net in a.networks().items():
            assert b.networks()[role].to_text() == net.to_text()


def test_config_validation():
    with pytest.raises(TrainError):
        TrainConfig(gamma=1.0)
    with pytest.raises(TrainError):
        TrainConfig(tau=0.0)
    with pytest.raises(TrainError):
        TrainConfig(actor_delay=0)
