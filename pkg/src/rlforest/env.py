"""Cooperative forest-building environment.

n agents each own one complete tree of depth D. At step t every agent places
the internal node with level-order index t of its tree; the partially built
forest (unplaced positions act as temporary leaves) is scored on the training
set and the shared reward is the change in that score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, imbalance_ratio
from .metrics import score as metric_score
from .tree import ForestModel, TreeModel, internal_count, label_leaves, node_counts

PENDING, PLACED, FROZEN, DEAD = 0, 1, 2, 3


class EnvError(RuntimeError):
    pass


def default_metric(d: Dataset) -> str:
    return "accuracy" if imbalance_ratio(d) < 1.5 else "g_mean"


def threshold_from_action(a_c: float) -> float:
    """Map a tanh-squashed action in [-1, 1] onto normalized feature space."""
    return float(np.clip((a_c + 1.0) / 2.0, 0.0, 1.0))


@dataclass(frozen=True)
class EnvConfig:
    n_agents: int
    depth: int
    attribute_count: int
    score_metric: str = "accuracy"
    sc0: float = 0.0
    bootstrap: bool = False

    def __post_init__(self):
        if self.n_agents < 1 or self.depth < 1 or self.attribute_count < 1:
            raise EnvError("n_agents, depth and attribute_count must be >= 1")
        if self.score_metric not in ("accuracy", "g_mean", "auc"):
            raise EnvError(f"unknown score metric {self.score_metric!r}")

    @property
    def max_timestep(self) -> int:
        return internal_count(self.depth)

    @property
    def obs_dim(self) -> int:
        return self.attribute_count + 1 + 2 + 2 + self.max_timestep

    @property
    def state_dim(self) -> int:
        return self.n_agents * (self.attribute_count + 3) + 2 + self.max_timestep


@dataclass
class StepResult:
    reward: float
    next_state: np.ndarray
    next_observations: list
    done: bool
    score: float


class ForestEnv:
    def __init__(self, cfg: EnvConfig, train: Dataset):
        if train.attribute_count != cfg.attribute_count:
            raise EnvError(f"config expects {cfg.attribute_count} attributes, "
                           f"dataset has {train.attribute_count}")
        if train.features.min() < 0 or train.features.max() > 1:
            raise EnvError("training features must be normalized to [0, 1]")
        self.cfg = cfg
        self.data = train
        self.T = cfg.max_timestep
        self.t = None
        self.trace = []

    # -- encoding ------------------------------------------------------------

    def _parent_block(self, i: int, j: int) -> np.ndarray:
        M = self.cfg.attribute_count
        block = np.zeros(M + 3)
        if j == 0:
            block[M + 1] = 1.0  # root sentinel
            return block
        p = (j - 1) // 2
        block[self.rec_attr[i, p]] = 1.0
        block[M] = self.rec_thr[i, p]
        block[M + 2] = 1.0
        return block

    def _position_block(self, j: int) -> np.ndarray:
        block = np.zeros(2 + self.T)
        if j >= self.T:
            return block  # terminal: no node left to place
        if j > 0:
            block[0 if j % 2 == 1 else 1] = 1.0
        block[2 + j] = 1.0
        return block

    def observation(self, i: int, j: int | None = None) -> np.ndarray:
        j = self.t if j is None else j
        if j >= self.T:
            return np.zeros(self.cfg.obs_dim)
        return np.concatenate([self._parent_block(i, j), self._position_block(j)])

    def global_state(self, j: int | None = None) -> np.ndarray:
        j = self.t if j is None else j
        n, M = self.cfg.n_agents, self.cfg.attribute_count
        if j >= self.T:
            return np.zeros(self.cfg.state_dim)
        parts = [self._parent_block(i, j) for i in range(n)]
        parts.append(self._position_block(j))
        s = np.concatenate(parts)
        assert s.size == n * (M + 3) + 2 + self.T
        return s

    # -- dynamics ------------------------------------------------------------

    def reset(self, seed: int = 0):
        n, T = self.cfg.n_agents, self.T
        rng = np.random.default_rng(seed)
        N = self.data.instance_count
        if self.cfg.bootstrap:
            self.members = [rng.integers(0, N, size=N) for _ in range(n)]
        else:
            self.members = [np.arange(N) for _ in range(n)]
        self.status = np.full((n, 2 * T + 1), PENDING, dtype=np.int8)
        self.rec_attr = np.zeros((n, T), dtype=np.int64)
        self.rec_thr = np.zeros((n, T))
        for i in range(n):
            y = self.data.labels[self.members[i]]
            if y.size == 0 or y.min() == y.max():
                self.status[i, 0] = FROZEN
        self.t = 0
        self.sc = float(self.cfg.sc0)
        self.trace = []
        self._forest = None
        return self.global_state(), [self.observation(i) for i in range(n)]

    def _eval_tree(self, i: int) -> TreeModel:
        """Current tree with every non-placed reachable position as a leaf."""
        t = TreeModel.empty(self.cfg.depth)
        st = self.status[i]
        for j in range(len(st)):
            if st[j] == PLACED:
                t.set_internal(j, int(self.rec_attr[i, j]), float(self.rec_thr[i, j]))
            elif j == 0 or (st[(j - 1) // 2] == PLACED):
                t.set_leaf(j)
        idx = self.members[i]
        return label_leaves(t, self.data.features[idx], self.data.labels[idx])

    def step(self, joint_action) -> StepResult:
        if self.t is None:
            raise EnvError("call reset() first")
        if self.t >= self.T:
            raise EnvError("episode is done; call reset()")
        n, j = self.cfg.n_agents, self.t
        if len(joint_action) != n:
            raise EnvError(f"expected {n} actions, got {len(joint_action)}")
        trees = []
        for i, (k, a_c) in enumerate(joint_action):
            k = int(k)
            if not 0 <= k < self.cfg.attribute_count:
                raise EnvError(f"agent {i}: attribute {k} out of range")
            thr = threshold_from_action(float(a_c))
            self.rec_attr[i, j] = k
            self.rec_thr[i, j] = thr
            st = self.status[i]
            if j > 0 and st[(j - 1) // 2] != PLACED:
                st[j] = DEAD
            if st[j] == PENDING:
                st[j] = PLACED
                tree = self._eval_tree(i)
                idx = self.members[i]
                total, pos = node_counts(tree, self.data.features[idx], self.data.labels[idx])
                for c in (2 * j + 1, 2 * j + 2):
                    if total[c] == 0 or pos[c] == 0 or pos[c] == total[c]:
                        st[c] = FROZEN
            else:
                tree = self._eval_tree(i) if self._forest is None else self._forest.trees[i]
            trees.append(tree)
        forest = ForestModel(trees)
        pred = forest.predict(self.data.features)
        sc = metric_score(self.cfg.score_metric, pred, self.data.labels)
        reward = sc - self.sc
        for i, (k, a_c) in enumerate(joint_action):
            self.trace.append((j, i, int(k), float(self.rec_thr[i, j]), sc, reward))
        self.sc = sc
        self._forest = forest
        self.t = j + 1
        done = self.t == self.T
        return StepResult(reward, self.global_state(),
                          [self.observation(i) for i in range(n)], done, sc)

    @property
    def done(self) -> bool:
        return self.t is not None and self.t >= self.T

    def extract_forest(self) -> ForestModel:
        if not self.done:
            raise EnvError("episode not finished")
        return ForestModel([t.copy() for t in self._forest.trees])

    def trace_text(self) -> str:
        return "".join(f"{t},{i},{k},{thr!r},{sc!r},{r!r}\n" for t, i, k, thr, sc, r in self.trace)

