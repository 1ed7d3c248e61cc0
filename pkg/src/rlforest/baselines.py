"""Classical tree ensembles used as comparators: random forest, AdaBoost, GBDT."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import TreeModel, format_node_lines, parse_node_lines


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class CartConfig:
    max_depth: int | None = None
    feature_subset: int | None = None   # m; None means all M attributes
    min_samples_split: int = 2

    def resolve_m(self, M: int) -> int:
        m = M if self.feature_subset is None else self.feature_subset
        if not 1 <= m <= M:
            raise BaselineError(f"feature subset {m} outside [1, {M}]")
        return m


def sqrt_rule(M: int) -> int:
    return max(1, int(math.isqrt(M)))


@dataclass
class CartTree:
    """Binary tree in parallel arrays; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        d = np.zeros(self.node_count, dtype=np.int64)
        for t in range(self.node_count):
            if self.feature[t] >= 0:
                d[self.left[t]] = d[self.right[t]] = d[t] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            go = f >= 0
            if not go.any():
                return node
            idx = node[go]
            right = X[rows[go], f[go]] > self.threshold[idx]
            node[go] = np.where(right, self.right[idx], self.left[idx])

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        return (self.predict_value(X) >= 0.5).astype(np.int64)

    def level_order(self):
        """(level-order index, node id) pairs; children of t sit at 2t+1, 2t+2."""
        out, stack = [], [(0, 0)]
        while stack:
            idx, nid = stack.pop()
            out.append((idx, nid))
            if self.feature[nid] >= 0:
                stack.append((2 * idx + 2, int(self.right[nid])))
                stack.append((2 * idx + 1, int(self.left[nid])))
        out.sort()
        return out

    def to_tree_model(self, depth: int | None = None) -> TreeModel:
        """Complete-array form (classification trees with 0/1 leaf values)."""
        depth = max(1, self.depth()) if depth is None else depth
        t = TreeModel.empty(depth)
        for idx, nid in self.level_order():
            if self.feature[nid] >= 0:
                t.set_internal(idx, int(self.feature[nid]), float(self.threshold[nid]))
            else:
                t.set_leaf(idx, int(round(self.value[nid])))
        return t

    def to_text(self, label_leaves=True) -> str:
        rows = []
        for idx, nid in self.level_order():
            if self.feature[nid] >= 0:
                rows.append((idx, "internal", int(self.feature[nid]), float(self.threshold[nid]), None))
            else:
                v = float(self.value[nid])
                rows.append((idx, "leaf", None, None, int(round(v)) if label_leaves else v))
        return format_node_lines(rows)

    @classmethod
    def from_text(cls, lines) -> "CartTree":
        rows = parse_node_lines(lines)
        ids = {idx: n for n, (idx, *_rest) in enumerate(sorted(rows))}
        n = len(rows)
        tree = cls(np.full(n, -1, dtype=np.int64), np.full(n, np.nan),
                   np.full(n, -1, dtype=np.int64), np.full(n, -1, dtype=np.int64), np.zeros(n))
        for idx, kind, attr, thr, value in rows:
            nid = ids[idx]
            if kind == "internal":
                tree.feature[nid] = attr
                tree.threshold[nid] = thr
                tree.left[nid] = ids[2 * idx + 1]
                tree.right[nid] = ids[2 * idx + 2]
            elif kind == "leaf":
                tree.value[nid] = float(value)
        return tree


# --- split search ----------------------------------------------------------------

def _best_split_gini(x, y, w):
    """Best threshold on one attribute by weighted Gini. Returns (impurity, thr) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    wpos = np.cumsum(ws * ys)[:-1]
    wtot = np.cumsum(ws)[:-1]
    Wp, W = float(np.sum(ws * ys)), float(np.sum(ws))
    wneg = wtot - wpos
    rtot = W - wtot
    rpos = Wp - wpos
    rneg = rtot - rpos
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(wtot > 0, wtot - (wpos ** 2 + wneg ** 2) / wtot, 0.0)
        right = np.where(rtot > 0, rtot - (rpos ** 2 + rneg ** 2) / rtot, 0.0)
    imp = np.where(valid, left + right, np.inf)
    i = int(np.argmin(imp))
    return float(imp[i]), _midpoint(xs[i], xs[i + 1])


def _best_split_mse(x, r, w):
    order = np.argsort(x, kind="stable")
    xs, rs, ws = x[order], r[order], w[order]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    sl = np.cumsum(ws * rs)[:-1]
    wl = np.cumsum(ws)[:-1]
    S, W = float(np.sum(ws * rs)), float(np.sum(ws))
    sr, wr = S - sl, W - wl
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(wl > 0, sl ** 2 / wl, 0.0) + np.where(wr > 0, sr ** 2 / wr, 0.0)
    # minimizing SSE is maximizing the between-group term
    imp = np.where(valid, -gain, np.inf)
    i = int(np.argmin(imp))
    return float(imp[i]), _midpoint(xs[i], xs[i + 1])


def _midpoint(a, b):
    m = (a + b) / 2.0
    return float(a if m >= b else m)


def _is_pure(y, w):
    return y.min() == y.max()


def grow_tree(X, target, weights, cfg: CartConfig, rng, criterion="gini", leaf_value=None):
    """Greedy top-down induction. ``leaf_value(idx)`` maps row indices to a leaf value."""
    X = np.asarray(X, dtype=float)
    N, M = X.shape
    if N == 0:
        raise BaselineError("cannot grow a tree on an empty dataset")
    m = cfg.resolve_m(M)
    split_fn = _best_split_gini if criterion == "gini" else _best_split_mse
    if leaf_value is None:
        def leaf_value(idx):
            wp = float(np.sum(weights[idx] * target[idx]))
            wt = float(np.sum(weights[idx]))
            return 1.0 if 2 * wp >= wt else 0.0
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(N), 0)]
    while stack:
        nid, idx, d = stack.pop()
        value[nid] = leaf_value(idx)
        if (len(idx) < cfg.min_samples_split
                or (cfg.max_depth is not None and d >= cfg.max_depth)
                or (criterion == "gini" and _is_pure(target[idx], weights[idx]))):
            continue
        best = None
        tried = 0
        for j in (rng.permutation(M) if m < M else range(M)):
            if tried >= m:
                break
            res = split_fn(X[idx, j], target[idx], weights[idx])
            if res is None:
                continue  # constant in this node; draw another attribute
            tried += 1
            if best is None or res[0] < best[0]:
                best = (res[0], int(j), res[1])
        if best is None:
            continue
        _, j, thr = best
        go_right = X[idx, j] > thr
        li, ri = new_node(), new_node()
        feature[nid], threshold[nid], left[nid], right[nid] = j, thr, li, ri
        stack.append((ri, idx[go_right], d + 1))
        stack.append((li, idx[~go_right], d + 1))
    return CartTree(np.array(feature, dtype=np.int64), np.array(threshold),
                    np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                    np.array(value))


def cart_build(X, y, cfg: CartConfig = CartConfig(), rng=None, sample_weight=None) -> CartTree:
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    return grow_tree(X, y, w, cfg, rng, "gini")


# --- random forest -----------------------------------------------------------------

@dataclass
class RandomForest:
    trees: list

    def votes(self, X):
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict_score(self, X):
        return self.votes(X) / len(self.trees)

    def predict(self, X):
        return (2 * self.votes(X) >= len(self.trees)).astype(np.int64)


def random_forest(X, y, n_trees=100, cfg: CartConfig | None = None, seed=0,
                  bootstrap=True) -> RandomForest:
    X = np.asarray(X, dtype=float)
    if cfg is None:
        cfg = CartConfig(feature_subset=sqrt_rule(X.shape[1]))
    rng = np.random.default_rng(seed)
    N = X.shape[0]
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, N, size=N) if bootstrap else np.arange(N)
        trees.append(cart_build(X[idx], np.asarray(y)[idx], cfg, rng))
    return RandomForest(trees)


# --- AdaBoost ----------------------------------------------------------------------

@dataclass
class AdaBoost:
    stumps: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    weight_trace: list = field(default_factory=list)

    def decision(self, X):
        X = np.atleast_2d(X)
        f = np.zeros(X.shape[0])
        for a, s in zip(self.alphas, self.stumps):
            f += a * (2 * s.predict(X) - 1)
        return f

    def predict_score(self, X):
        return self.decision(X)

    def predict(self, X):
        return (self.decision(X) >= 0).astype(np.int64)


def adaboost(X, y, rounds=50, max_depth=1) -> AdaBoost:
    """Discrete AdaBoost over weighted-Gini CART stumps.

    Stops early when a stump has weighted error >= 0.5 (alpha would be <= 0,
    the stump is discarded) or error 0 (kept with alpha 1, it alone decides).
    ``weight_trace`` holds the normalized instance weights before each round
    and after the last.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    N = len(y)
    w = np.full(N, 1.0 / N)
    model = AdaBoost(weight_trace=[w.copy()])
    cfg = CartConfig(max_depth=max_depth)
    sign = 2 * y - 1
    for _ in range(rounds):
        stump = cart_build(X, y, cfg, sample_weight=w)
        h = stump.predict(X)
        err = float(np.sum(w[h != y]))
        if err >= 0.5:
            break
        if err == 0.0:
            model.stumps.append(stump)
            model.alphas.append(1.0)
            break
        alpha = 0.5 * math.log((1 - err) / err)
        model.stumps.append(stump)
        model.alphas.append(alpha)
        w = w * np.exp(-alpha * sign * (2 * h - 1))
        w /= w.sum()
        model.weight_trace.append(w.copy())
    return model


# --- GBDT --------------------------------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def log_loss_from_score(y, F):
    """Cross-entropy written in the score F: y log(1+e^-F) + (1-y)(F + log(1+e^-F))."""
    y = np.asarray(y, dtype=float)
    F = np.asarray(F, dtype=float)
    sp = np.logaddexp(0.0, -F)
    return y * sp + (1 - y) * (F + sp)


@dataclass
class GbdtState:
    learning_rate: float
    init_score: float
    stages: list = field(default_factory=list)
    F: np.ndarray = None
    loss_trace: list = field(default_factory=list)

    def decision(self, X):
        X = np.atleast_2d(X)
        f = np.full(X.shape[0], self.init_score)
        for tree in self.stages:
            f = f + self.learning_rate * tree.predict_value(X)
        return f

    def predict_score(self, X):
        return sigmoid(self.decision(X))

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(np.int64)


def gbdt_fit(X, y, stages=100, learning_rate=0.1, depth=3, seed=0) -> GbdtState:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = y.mean()
    if p <= 0 or p >= 1:
        raise BaselineError("GBDT needs both classes (initial log-odds would be infinite)")
    F0 = math.log(p / (1 - p))
    state = GbdtState(learning_rate, F0, F=np.full(len(y), F0))
    state.loss_trace.append(float(log_loss_from_score(y, state.F).sum()))
    rng = np.random.default_rng(seed)
    cfg = CartConfig(max_depth=depth)
    ones = np.ones(len(y))
    for _ in range(stages):
        yhat = sigmoid(state.F)
        resid = y - yhat
        hess = yhat * (1 - yhat)

        def newton(idx, resid=resid, hess=hess):
            den = float(hess[idx].sum())
            return float(resid[idx].sum()) / den if den > 1e-12 else 0.0

        tree = grow_tree(X, resid, ones, cfg, rng, "mse", newton)
        if not np.array_equal(resid, y - sigmoid(state.F)):
            raise BaselineError("residual target drifted from y - sigmoid(F)")
        state.stages.append(tree)
        state.F = state.F + learning_rate * tree.predict_value(X)
        state.loss_trace.append(float(log_loss_from_score(y, state.F).sum()))
    return state


def gbdt_predict(state: GbdtState, x):
    f = state.decision(np.asarray(x, dtype=float)[None, :])[0]
    yhat = float(sigmoid(f))
    return (1 if yhat >= 0.5 else 0), yhat
