"""Complete binary decision trees stored in level order, and unweighted forests.

Node ``t`` has children ``2t+1`` (left, ``x[k] <= threshold``) and ``2t+2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INACTIVE, INTERNAL, LEAF = 0, 1, 2
KIND_NAMES = {INACTIVE: "inactive", INTERNAL: "internal", LEAF: "leaf"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}


class TreeError(ValueError):
    pass


def node_count(depth: int) -> int:
    return 2 ** (depth + 1) - 1


def internal_count(depth: int) -> int:
    return 2 ** depth - 1


@dataclass
class TreeModel:
    """Flat level-order tree of fixed depth.

    ``kind`` holds INACTIVE/INTERNAL/LEAF codes, ``attribute`` is -1 and
    ``threshold`` NaN where unset, ``leaf_label`` is -1 except on leaves.
    """

    depth: int
    kind: np.ndarray
    attribute: np.ndarray
    threshold: np.ndarray
    leaf_label: np.ndarray

    @classmethod
    def empty(cls, depth: int) -> "TreeModel":
        if depth < 1:
            raise TreeError("depth must be >= 1")
        n = node_count(depth)
        return cls(depth, np.zeros(n, dtype=np.int8), np.full(n, -1, dtype=np.int64),
                   np.full(n, np.nan), np.full(n, -1, dtype=np.int64))

    @classmethod
    def constant(cls, depth: int, label: int) -> "TreeModel":
        t = cls.empty(depth)
        t.kind[0] = LEAF
        t.leaf_label[0] = label
        return t

    def copy(self) -> "TreeModel":
        return TreeModel(self.depth, self.kind.copy(), self.attribute.copy(),
                         self.threshold.copy(), self.leaf_label.copy())

    def set_internal(self, t: int, attribute: int, threshold: float):
        self.kind[t] = INTERNAL
        self.attribute[t] = attribute
        self.threshold[t] = threshold
        self.leaf_label[t] = -1

    def set_leaf(self, t: int, label: int = -1):
        self.kind[t] = LEAF
        self.attribute[t] = -1
        self.threshold[t] = np.nan
        self.leaf_label[t] = label

    def validate(self, attribute_count: int | None = None):
        n = node_count(self.depth)
        if len(self.kind) != n:
            raise TreeError(f"depth {self.depth} needs {n} nodes, got {len(self.kind)}")
        for t in range(n):
            k = self.kind[t]
            if k == INTERNAL:
                if 2 * t + 1 >= n:
                    raise TreeError(f"node {t} is internal at the bottom level")
                if self.attribute[t] < 0 or not np.isfinite(self.threshold[t]):
                    raise TreeError(f"internal node {t} lacks attribute/threshold")
                if attribute_count is not None and self.attribute[t] >= attribute_count:
                    raise TreeError(f"node {t} attribute {self.attribute[t]} out of range")
                for c in (2 * t + 1, 2 * t + 2):
                    if self.kind[c] == INACTIVE:
                        raise TreeError(f"internal node {t} has inactive child {c}")
            elif k == LEAF:
                if self.leaf_label[t] not in (0, 1):
                    raise TreeError(f"leaf {t} has no label")
            if t > 0 and k != INACTIVE and self.kind[(t - 1) // 2] != INTERNAL:
                raise TreeError(f"node {t} is active below a non-internal parent")
        if self.kind[0] == INACTIVE:
            raise TreeError("root is inactive")

    def paths(self, X: np.ndarray) -> list[np.ndarray]:
        """Node index per row at each level visited, root first."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        out = [node]
        for _ in range(self.depth + 1):
            kind = self.kind[node]
            if (kind == INACTIVE).any():
                bad = int(node[kind == INACTIVE][0])
                raise TreeError(f"traversal reached inactive node {bad}")
            go = kind == INTERNAL
            if not go.any():
                return out
            node = node.copy()
            idx = node[go]
            right = X[rows[go], self.attribute[idx]] > self.threshold[idx]
            node[go] = 2 * idx + 1 + right
            out.append(node)
        raise TreeError("traversal fell off the bottom level")

    def apply(self, X) -> np.ndarray:
        return self.paths(X)[-1]

    def predict(self, X) -> np.ndarray:
        return self.leaf_label[self.apply(X)]


def route(t: TreeModel, x) -> int:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise TreeError("route takes a single feature vector")
    return int(t.apply(x[None, :])[0])


def tree_predict(t: TreeModel, x) -> int:
    return int(t.leaf_label[route(t, x)])


def node_counts(t: TreeModel, X, y):
    """Per-node (instances routed, positives routed) over the full path."""
    n = len(t.kind)
    total = np.zeros(n, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    y = np.asarray(y)
    for level in t.paths(X):
        total += np.bincount(level, minlength=n)
        pos += np.bincount(level, weights=y, minlength=n).astype(np.int64)
    return total, pos


def label_leaves(t: TreeModel, X, y) -> TreeModel:
    """Majority label per leaf; empty leaves inherit from the nearest
    ancestor that received instances. Exact ties label 1."""
    out = t.copy()
    total, pos = node_counts(t, X, y)
    for leaf in np.flatnonzero(t.kind == LEAF):
        a = int(leaf)
        while total[a] == 0 and a > 0:
            a = (a - 1) // 2
        out.leaf_label[leaf] = 1 if 2 * pos[a] >= total[a] else 0
    return out


@dataclass
class ForestModel:
    trees: list

    def __post_init__(self):
        if not self.trees:
            raise TreeError("a forest needs at least one tree")
        depths = {t.depth for t in self.trees}
        if len(depths) != 1:
            raise TreeError(f"trees disagree on depth: {sorted(depths)}")

    @property
    def n(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def vote_fraction(self, X) -> np.ndarray:
        return self.votes(X) / self.n

    def predict(self, X) -> np.ndarray:
        # split votes go to the positive class
        return (2 * self.votes(X) >= self.n).astype(np.int64)


def forest_predict(f: ForestModel, x) -> int:
    x = np.asarray(x, dtype=float)
    return int(f.predict(x[None, :])[0])


# --- text serialization -----------------------------------------------------

def _fmt(v):
    return "-" if v is None else str(v)


def format_node_lines(nodes) -> str:
    """``nodes``: iterable of (index, kind_name, attribute, threshold, value),
    ``None`` for unset fields. Floats are written with repr for exact reload."""
    lines = []
    for index, kind, attr, thr, value in nodes:
        thr_s = "-" if thr is None else repr(float(thr))
        val_s = "-" if value is None else (repr(value) if isinstance(value, float) else str(value))
        lines.append(f"{index},{kind},{_fmt(attr)},{thr_s},{val_s}")
    return "\n".join(lines) + "\n"


def parse_node_lines(lines):
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise TreeError(f"bad node line {line!r}")
        index, kind, attr, thr, value = parts
        if kind not in KIND_CODES:
            raise TreeError(f"unknown node kind {kind!r}")
        out.append((int(index), kind,
                    None if attr == "-" else int(attr),
                    None if thr == "-" else float(thr),
                    None if value == "-" else value))
    return out


def tree_to_text(t: TreeModel) -> str:
    rows = []
    for i in range(len(t.kind)):
        k = int(t.kind[i])
        rows.append((i, KIND_NAMES[k],
                     int(t.attribute[i]) if k == INTERNAL else None,
                     float(t.threshold[i]) if k == INTERNAL else None,
                     int(t.leaf_label[i]) if k == LEAF and t.leaf_label[i] >= 0 else None))
    return format_node_lines(rows)


def tree_from_text(text) -> TreeModel:
    rows = parse_node_lines(text.splitlines() if isinstance(text, str) else text)
    n = len(rows)
    depth = int(np.log2(n + 1)) - 1
    if node_count(depth) != n or depth < 1:
        raise TreeError(f"{n} node lines do not form a complete tree")
    t = TreeModel.empty(depth)
    for index, kind, attr, thr, value in rows:
        if kind == "internal":
            t.set_internal(index, attr, thr)
        elif kind == "leaf":
            t.set_leaf(index, -1 if value is None else int(value))
    return t


def forest_to_text(f: ForestModel, model_kind="forest") -> str:
    parts = [f"#model {model_kind}\n"]
    for i, t in enumerate(f.trees):
        parts.append(f"#tree {i}\n")
        parts.append(tree_to_text(t))
    return "".join(parts)


def split_tree_blocks(text):
    """Split serialized text into (model_kind, [block lines ...])."""
    kind, blocks, cur = None, [], None
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("#model"):
            kind = s.split(None, 1)[1] if len(s.split()) > 1 else None
        elif s.startswith("#tree"):
            cur = []
            blocks.append(cur)
        elif s.startswith("#"):
            continue
        elif s:
            if cur is None:
                cur = []
                blocks.append(cur)
            cur.append(s)
    return kind, blocks


def forest_from_text(text) -> ForestModel:
    _, blocks = split_tree_blocks(text)
    return ForestModel([tree_from_text(b) for b in blocks])
