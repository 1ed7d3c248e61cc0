"""Multi-agent hybrid-action soft actor-critic with centralized critics.

Each agent i has an actor reading only its local observation and twin critics
reading the global state plus the agent's own K-vector of continuous
parameters; the critics output one q-value per discrete action. The
expectations over discrete actions are computed in closed form.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import EnvConfig, ForestEnv
from .fileio import atomic_write
from .nn import (TANH_EPS, AdamState, Mlp, adam_step, log_softmax, soft_update, softmax,
                 split_head, squashed_log_prob)
from .tree import ForestModel


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 300
    gamma: float = 0.99
    tau: float = 0.005
    alpha_d: float = 0.2
    alpha_c: float = 0.2
    q_coef: float = 2.0
    batch_size: int = 256
    buffer_capacity: int = 100_000
    actor_delay: int = 2
    warmup: int = 1000
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise TrainError("gamma must lie in [0, 1)")
        if not 0 < self.tau <= 1:
            raise TrainError("tau must lie in (0, 1]")
        if self.alpha_d < 0 or self.alpha_c < 0:
            raise TrainError("temperatures must be >= 0")
        if self.actor_delay < 1 or self.batch_size < 1 or self.episodes < 0:
            raise TrainError("actor_delay and batch_size must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass
class Transition:
    s: np.ndarray
    o: np.ndarray        # (n, obs_dim)
    k: np.ndarray        # (n,) chosen attributes
    a_c: np.ndarray      # (n, K) full continuous parameter vectors
    r: float
    s2: np.ndarray
    o2: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring of joint transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise TrainError("capacity must be >= 1")
        self.capacity = capacity
        self.size = 0
        self._next = 0
        self._store = None

    def __len__(self):
        return self.size

    def push(self, tr: Transition):
        if self._store is None:
            self._store = {
                "s": np.zeros((self.capacity,) + tr.s.shape),
                "o": np.zeros((self.capacity,) + tr.o.shape),
                "k": np.zeros((self.capacity,) + tr.k.shape, dtype=np.int64),
                "a_c": np.zeros((self.capacity,) + tr.a_c.shape),
                "r": np.zeros(self.capacity),
                "s2": np.zeros((self.capacity,) + tr.s2.shape),
                "o2": np.zeros((self.capacity,) + tr.o2.shape),
                "done": np.zeros(self.capacity),
            }
        j = self._next
        for name, arr in self._store.items():
            arr[j] = getattr(tr, name)
        self._next = (j + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self):
        start = self._next if self.size == self.capacity else 0
        return [(start + i) % self.capacity for i in range(self.size)]

    def items(self) -> list:
        """Stored transitions, oldest first."""
        out = []
        for j in self._order():
            st = self._store
            out.append(Transition(st["s"][j].copy(), st["o"][j].copy(), st["k"][j].copy(),
                                  st["a_c"][j].copy(), float(st["r"][j]), st["s2"][j].copy(),
                                  st["o2"][j].copy(), bool(st["done"][j])))
        return out

    def sample(self, batch_size: int, rng) -> dict:
        if self.size == 0:
            raise TrainError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {name: arr[idx] for name, arr in self._store.items()}


def make_batch(transitions) -> dict:
    return {
        "s": np.stack([t.s for t in transitions]),
        "o": np.stack([t.o for t in transitions]),
        "k": np.stack([t.k for t in transitions]),
        "a_c": np.stack([t.a_c for t in transitions]),
        "r": np.array([t.r for t in transitions], dtype=float),
        "s2": np.stack([t.s2 for t in transitions]),
        "o2": np.stack([t.o2 for t in transitions]),
        "done": np.array([t.done for t in transitions], dtype=float),
    }


class AgentNets:
    def __init__(self, obs_dim, state_dim, K, hidden, rng, actor_lr=3e-4, critic_lr=3e-4):
        self.obs_dim, self.state_dim, self.K = obs_dim, state_dim, K
        self.actor = Mlp((obs_dim, *hidden, 3 * K), rng)
        self.critics = [Mlp((state_dim + K, *hidden, K), rng) for _ in range(2)]
        self.targets = [c.copy() for c in self.critics]
        self.actor_opt = AdamState.for_params(self.actor.params, lr=actor_lr)
        self.critic_opts = [AdamState.for_params(c.params, lr=critic_lr) for c in self.critics]

    def policy(self, o):
        """Local-observation-only policy head: (probabilities, mean, log-std)."""
        logits, mu, ls, _ = split_head(self.actor.forward(o), self.K)
        return softmax(logits), mu, ls

    def act(self, o, rng, deterministic=False):
        """Decentralized action from the local observation alone."""
        p, mu, ls = self.policy(o)
        if deterministic:
            return int(np.argmax(p)), np.tanh(mu)
        k = int(rng.choice(self.K, p=p))
        a = np.tanh(mu + np.exp(ls) * rng.standard_normal(self.K))
        return k, a

    def networks(self) -> dict:
        return {"actor": self.actor, "critic1": self.critics[0], "critic2": self.critics[1],
                "target1": self.targets[0], "target2": self.targets[1]}


class MAHSAC:
    """Per-agent losses and updates over a shared replay buffer."""

    def __init__(self, env_cfg: EnvConfig, cfg: TrainConfig):
        self.env_cfg = env_cfg
        self.cfg = cfg
        ss = np.random.SeedSequence(cfg.seed)
        init_ss, self._act_ss, self._upd_ss, self._env_ss = ss.spawn(4)
        init_rng = np.random.default_rng(init_ss)
        self.K = env_cfg.attribute_count
        self.agents = [AgentNets(env_cfg.obs_dim, env_cfg.state_dim, self.K, cfg.hidden,
                                 init_rng, cfg.actor_lr, cfg.critic_lr)
                       for _ in range(env_cfg.n_agents)]
        self.act_rng = np.random.default_rng(self._act_ss)
        self.upd_rng = np.random.default_rng(self._upd_ss)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.critic_updates = [0] * env_cfg.n_agents

    # -- shared pieces ---------------------------------------------------------

    def _soft_value(self, i, s2, o2, eps):
        """Closed-form E over discrete actions of min target q minus entropy terms."""
        ag = self.agents[i]
        cfg = self.cfg
        logits, mu, ls, _ = split_head(ag.actor.forward(o2), self.K)
        p = softmax(logits)
        logp = log_softmax(logits)
        a = np.tanh(mu + np.exp(ls) * eps)
        lc = squashed_log_prob(eps, ls, a)
        x = np.concatenate([s2, a], axis=1)
        q = np.minimum(ag.targets[0].forward(x), ag.targets[1].forward(x))
        return np.sum(p * (q - cfg.alpha_d * logp - cfg.alpha_c * p * lc), axis=1)

    def critic_target(self, batch, i, eps=None):
        B = len(batch["r"])
        if B == 0:
            raise TrainError("empty batch")
        if eps is None:
            eps = self.upd_rng.standard_normal((B, self.K))
        v = self._soft_value(i, batch["s2"], batch["o2"][:, i], eps)
        return batch["r"] + self.cfg.gamma * (1.0 - batch["done"]) * v

    def critic_loss_and_grads(self, batch, i, y, j):
        """0.5 * mean (Q_j(s, a_c)[k] - y)^2 and its parameter gradients."""
        ag = self.agents[i]
        B = len(y)
        x = np.concatenate([batch["s"], batch["a_c"][:, i]], axis=1)
        q, acts = ag.critics[j].forward(x, keep=True)
        rows = np.arange(B)
        qhat = q[rows, batch["k"][:, i]]
        resid = qhat - y
        loss = 0.5 * float(np.mean(resid ** 2))
        dout = np.zeros_like(q)
        dout[rows, batch["k"][:, i]] = resid / B
        grads, _ = ag.critics[j].backward(acts, dout)
        return loss, grads

    def update_critics(self, batch, i, y=None):
        if len(batch["r"]) < 1:
            raise TrainError("batch smaller than 1")
        if y is None:
            y = self.critic_target(batch, i)
        ag = self.agents[i]
        losses = []
        for j in range(2):
            loss, grads = self.critic_loss_and_grads(batch, i, y, j)
            if not math.isfinite(loss):
                raise TrainError(f"agent {i} critic {j}: non-finite loss")
            adam_step(ag.critic_opts[j], ag.critics[j].params, grads)
            losses.append(loss)
        self.critic_updates[i] += 1
        return tuple(losses)

    def actor_loss_and_grads(self, s, o, eps, i):
        """Actor objective and gradients w.r.t. the actor parameters.

        Per sample: sum_k p_k (a_d log p_k + a_c p_k log pi_c(x_k) - c min_j Q_j(s, x)[k])
        with x = tanh(mu + sigma * eps) reparameterized.
        """
        ag = self.agents[i]
        cfg = self.cfg
        K, B = self.K, s.shape[0]
        out, acts = ag.actor.forward(o, keep=True)
        logits, mu, ls, raw = split_head(out, K)
        p = softmax(logits)
        logp = log_softmax(logits)
        sigma = np.exp(ls)
        a = np.tanh(mu + sigma * eps)
        lc = squashed_log_prob(eps, ls, a)
        x = np.concatenate([s, a], axis=1)
        q1, acts1 = ag.critics[0].forward(x, keep=True)
        q2, acts2 = ag.critics[1].forward(x, keep=True)
        use1 = q1 <= q2
        q = np.where(use1, q1, q2)
        ad, ac, c = cfg.alpha_d, cfg.alpha_c, cfg.q_coef
        per_k = p * (ad * logp + ac * p * lc - c * q)
        loss = float(per_k.sum(axis=1).mean())

        # d loss / d p_k holding lc and q fixed, then through the softmax
        g = ad * (logp + 1.0) + 2.0 * ac * p * lc - c * q
        dlogits = p * (g - np.sum(p * g, axis=1, keepdims=True))
        # through the critics to the continuous actions
        dq = -c * p
        _, dx1 = ag.critics[0].backward(acts1, dq * use1)
        _, dx2 = ag.critics[1].backward(acts2, dq * ~use1)
        da = dx1[:, s.shape[1]:] + dx2[:, s.shape[1]:]
        dlc = ac * p * p
        one_m = 1.0 - a ** 2
        du = da * one_m + dlc * (2.0 * a * one_m / (one_m + TANH_EPS))
        dmu = du
        dls = du * sigma * eps - dlc
        dls = dls * ((raw >= -20.0) & (raw <= 2.0))
        dout = np.concatenate([dlogits, dmu, dls], axis=1) / B
        grads, _ = ag.actor.backward(acts, dout)
        return loss, grads

    def update_actor(self, batch, i, eps=None):
        if len(self.buffer) < self.cfg.warmup:
            raise TrainError("actor update requested during warmup")
        B = len(batch["r"])
        if eps is None:
            eps = self.upd_rng.standard_normal((B, self.K))
        loss, grads = self.actor_loss_and_grads(batch["s"], batch["o"][:, i], eps, i)
        if not math.isfinite(loss):
            raise TrainError(f"agent {i} actor: non-finite loss")
        adam_step(self.agents[i].actor_opt, self.agents[i].actor.params, grads)
        return loss

    def update_targets(self, i):
        ag = self.agents[i]
        for t, c in zip(ag.targets, ag.critics):
            soft_update(t.params, c.params, self.cfg.tau)

    # -- interaction -----------------------------------------------------------

    def act(self, observations, random=False):
        """Joint action from per-agent local observations only."""
        ks, acs = [], []
        for ag, o in zip(self.agents, observations):
            if random:
                k = int(self.act_rng.integers(self.K))
                a = self.act_rng.uniform(-1.0, 1.0, size=self.K)
            else:
                k, a = ag.act(o, self.act_rng)
            ks.append(k)
            acs.append(a)
        return np.array(ks, dtype=np.int64), np.array(acs)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        manifest = {"train_config": asdict(self.cfg), "env_config": asdict(self.env_cfg),
                    "networks": []}
        for i, ag in enumerate(self.agents):
            for role, net in ag.networks().items():
                fname = f"agent{i}_{role}.mlp"
                atomic_write(os.path.join(directory, fname), net.to_text())
                manifest["networks"].append({"agent": i, "role": role, "file": fname})
        atomic_write(os.path.join(directory, "manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "MAHSAC":
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        trainer = cls(EnvConfig(**manifest["env_config"]), TrainConfig(**manifest["train_config"]))
        for entry in manifest["networks"]:
            with open(os.path.join(directory, entry["file"])) as fh:
                net = Mlp.from_text(fh.read())
            ag = trainer.agents[entry["agent"]]
            role = entry["role"]
            if role == "actor":
                ag.actor = net
            else:
                slot = int(role[-1]) - 1
                (ag.critics if role.startswith("critic") else ag.targets)[slot] = net
        return trainer


@dataclass
class EpisodeRecord:
    episode: int
    score: float
    total_reward: float
    actor_loss_mean: float
    critic_loss_mean: float


@dataclass
class TrainResult:
    forest: ForestModel
    best_score: float
    curve: list = field(default_factory=list)
    trainer: MAHSAC = None

    def curve_text(self) -> str:
        lines = ["episode,score,total_reward,actor_loss_mean,critic_loss_mean"]
        for e in self.curve:
            lines.append(f"{e.episode},{e.score!r},{e.total_reward!r},"
                         f"{e.actor_loss_mean!r},{e.critic_loss_mean!r}")
        return "\n".join(lines) + "\n"


def train(env: ForestEnv, cfg: TrainConfig, trainer: MAHSAC | None = None,
          on_episode=None) -> TrainResult:
    """Run ``cfg.episodes`` episodes of T joint steps, learning off-policy."""
    trainer = trainer or MAHSAC(env.cfg, cfg)
    n = env.cfg.n_agents
    env_rng = np.random.default_rng(trainer._env_ss)
    best, best_score, curve = None, -math.inf, []
    for ep in range(cfg.episodes):
        s, obs = env.reset(seed=int(env_rng.integers(2 ** 63)))
        total_r, a_losses, c_losses = 0.0, [], []
        done = False
        while not done:
            warm = len(trainer.buffer) < cfg.warmup
            ks, acs = trainer.act(obs, random=warm)
            res = env.step([(ks[i], acs[i, ks[i]]) for i in range(n)])
            trainer.buffer.push(Transition(s, np.stack(obs), ks, acs, res.reward,
                                           res.next_state, np.stack(res.next_observations),
                                           res.done))
            total_r += res.reward
            s, obs, done = res.next_state, res.next_observations, res.done
            if len(trainer.buffer) >= cfg.warmup:
                for i in range(n):
                    batch = trainer.buffer.sample(cfg.batch_size, trainer.upd_rng)
                    c_losses.extend(trainer.update_critics(batch, i))
                    if trainer.critic_updates[i] % cfg.actor_delay == 0:
                        a_losses.append(trainer.update_actor(batch, i))
                    trainer.update_targets(i)
        score = env.sc
        rec = EpisodeRecord(ep, score, total_r,
                            float(np.mean(a_losses)) if a_losses else math.nan,
                            float(np.mean(c_losses)) if c_losses else math.nan)
        curve.append(rec)
        if score > best_score:
            best_score, best = score, env.extract_forest()
        if on_episode is not None:
            on_episode(rec)
    return TrainResult(best, best_score, curve, trainer)
