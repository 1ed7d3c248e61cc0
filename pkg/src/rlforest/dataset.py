"""Tabular binary-classification datasets: loading, normalization and folds."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or unusable dataset input."""


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    attribute_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError("features must be a 2-d matrix")
        if X.shape[0] != y.shape[0]:
            raise DatasetError(
                f"features have {X.shape[0]} rows but labels have {y.shape[0]}")
        if not np.isin(y, (0, 1)).all():
            raise DatasetError("labels must be 0/1")
        if not np.isfinite(X).all():
            raise DatasetError("features contain missing or non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if not self.attribute_names:
            object.__setattr__(self, "attribute_names",
                               tuple(f"x{j}" for j in range(X.shape[1])))

    @property
    def attribute_count(self) -> int:
        return self.features.shape[1]

    @property
    def instance_count(self) -> int:
        return self.features.shape[0]

    def subset(self, index) -> "Dataset":
        return Dataset(self.name, self.features[index], self.labels[index],
                       self.attribute_names)


def _map_labels(raw, positive_label, where):
    classes = sorted(set(raw))
    if len(classes) > 2:
        raise DatasetError(f"{where}: expected 2 classes, found {len(classes)}: {classes}")
    if len(classes) < 2:
        raise DatasetError(f"{where}: single-class data ({classes})")
    if positive_label is None:
        # minority class is positive; ties go to the lexically larger label
        counts = {c: raw.count(c) for c in classes}
        positive_label = min(reversed(classes), key=counts.get)
    positive_label = str(positive_label)
    if positive_label not in classes:
        raise DatasetError(f"{where}: positive label {positive_label!r} not among {classes}")
    return np.array([1 if v == positive_label else 0 for v in raw], dtype=np.int64)


def _parse_rows(rows, label_pos, where, first_line):
    feats, raw = [], []
    for r, row in enumerate(rows):
        lineno = first_line + r
        vals = []
        for c, cell in enumerate(row):
            if c == label_pos:
                continue
            cell = cell.strip()
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{where}: row {lineno}, column {c + 1}: cannot parse {cell!r} as a number"
                ) from None
            if not np.isfinite(v):
                raise DatasetError(f"{where}: row {lineno}, column {c + 1}: non-finite value")
            vals.append(v)
        feats.append(vals)
        raw.append(row[label_pos].strip())
    return feats, raw


def load_csv(path, label_column=-1, positive_label=None, name=None) -> Dataset:
    """Load a headed CSV; ``label_column`` is a header name or a column index."""
    if not os.path.exists(path):
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DatasetError(f"{path}: needs a header and at least one data row")
    header, body = rows[0], rows[1:]
    if isinstance(label_column, str):
        if label_column not in header:
            raise DatasetError(f"{path}: no column named {label_column!r}")
        label_pos = header.index(label_column)
    else:
        label_pos = label_column % len(header)
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DatasetError(
                f"{path}: row {r + 2} has {len(row)} fields, header has {len(header)}")
    feats, raw = _parse_rows(body, label_pos, path, first_line=2)
    y = _map_labels(raw, positive_label, path)
    names = tuple(h.strip() for i, h in enumerate(header) if i != label_pos)
    return Dataset(name or os.path.splitext(os.path.basename(path))[0],
                   np.array(feats, dtype=float), y, names)


def load_keel(path, positive_label=None) -> Dataset:
    """Load a KEEL ``.dat`` file.

    The class attribute is the one named in ``@outputs``, else the last
    declared attribute. KEEL imbalanced files label the minority class
    ``positive``; that label is used as positive when present.
    """
    if not os.path.exists(path):
        raise DatasetError(f"no such file: {path}")
    with open(path) as fh:
        lines = fh.read().splitlines()
    relation = os.path.splitext(os.path.basename(path))[0]
    attrs, outputs, data_at = [], None, None
    for i, line in enumerate(lines):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        low = s.lower()
        if low.startswith("@relation"):
            parts = s.split(None, 1)
            if len(parts) == 2:
                relation = parts[1].strip()
        elif low.startswith("@attribute"):
            parts = s.split(None, 2)
            if len(parts) < 2:
                raise DatasetError(f"{path}: line {i + 1}: malformed @attribute")
            attrs.append(parts[1].strip())
        elif low.startswith("@output"):
            outputs = s.split(None, 1)[1].strip() if len(s.split(None, 1)) == 2 else None
        elif low.startswith("@input"):
            continue
        elif low.startswith("@data"):
            data_at = i + 1
            break
        elif s.startswith("@"):
            raise DatasetError(f"{path}: line {i + 1}: unknown header directive {s.split()[0]}")
        else:
            raise DatasetError(f"{path}: line {i + 1}: data before @data marker")
    if data_at is None:
        raise DatasetError(f"{path}: malformed header, no @data marker")
    if len(attrs) < 2:
        raise DatasetError(f"{path}: malformed header, need at least 2 @attribute lines")
    if outputs is not None:
        if outputs not in attrs:
            raise DatasetError(f"{path}: @outputs names unknown attribute {outputs!r}")
        label_pos = attrs.index(outputs)
    else:
        label_pos = len(attrs) - 1
    body = []
    for i in range(data_at, len(lines)):
        s = lines[i].strip()
        if not s or s.startswith("%"):
            continue
        row = next(csv.reader(io.StringIO(s)))
        if len(row) != len(attrs):
            raise DatasetError(
                f"{path}: line {i + 1}: {len(row)} values but {len(attrs)} attributes declared")
        body.append((i + 1, row))
    if not body:
        raise DatasetError(f"{path}: no data rows")
    feats, raw = [], []
    for lineno, row in body:
        f, r = _parse_rows([row], label_pos, path, first_line=lineno)
        feats += f
        raw += r
    if positive_label is None and "positive" in raw and len(set(raw)) == 2:
        positive_label = "positive"
    y = _map_labels(raw, positive_label, path)
    names = tuple(a for j, a in enumerate(attrs) if j != label_pos)
    return Dataset(relation, np.array(feats, dtype=float), y, names)


def load(path, label_column=-1, positive_label=None) -> Dataset:
    """Dispatch on extension: ``.dat`` is KEEL, anything else CSV."""
    if str(path).lower().endswith(".dat"):
        return load_keel(path, positive_label)
    return load_csv(path, label_column, positive_label)


def write_csv(d: Dataset, path, label_name="label"):
    # repr() of a float round-trips exactly through float()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(d.attribute_names) + [label_name])
        for x, y in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def normalize(d: Dataset) -> Dataset:
    """Min-max scale every column to [0, 1]; constant columns become 0.5."""
    X = d.features
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    const = span == 0
    out = (X - lo) / np.where(const, 1.0, span)
    out[:, const] = 0.5
    np.clip(out, 0.0, 1.0, out=out)
    return Dataset(d.name, out, d.labels, d.attribute_names)


def normalize_with(d: Dataset, reference: Dataset) -> Dataset:
    """Scale ``d`` with the column ranges of ``reference`` (for held-out folds)."""
    lo = reference.features.min(axis=0)
    span = reference.features.max(axis=0) - lo
    const = span == 0
    out = (d.features - lo) / np.where(const, 1.0, span)
    out[:, const] = 0.5
    return Dataset(d.name, np.clip(out, 0.0, 1.0), d.labels, d.attribute_names)


def imbalance_ratio(d: Dataset) -> float:
    pos = int(d.labels.sum())
    neg = d.instance_count - pos
    if pos == 0 or neg == 0:
        raise DatasetError("imbalance ratio needs both classes")
    return max(pos, neg) / min(pos, neg)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        if self.k < 2:
            raise DatasetError("k must be >= 2")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise DatasetError("fold index out of range")
        if len(np.unique(a)) != self.k:
            raise DatasetError("every fold must be non-empty")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def split(self, fold):
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def to_text(self) -> str:
        return "".join(f"{i},{f}\n" for i, f in enumerate(self.assignments))

    @classmethod
    def from_text(cls, text, k=None, seed=0) -> "FoldPlan":
        pairs = [tuple(int(v) for v in line.split(",")) for line in text.splitlines() if line.strip()]
        pairs.sort()
        if [p[0] for p in pairs] != list(range(len(pairs))):
            raise DatasetError("fold plan instance indices must be 0..n-1")
        a = np.array([p[1] for p in pairs], dtype=np.int64)
        return cls(k if k is not None else int(a.max()) + 1, a, seed)


def stratified_folds(d: Dataset, k: int, seed: int) -> FoldPlan:
    """Deal each shuffled class round-robin over folds, continuing the cycle
    across classes so fold sizes also stay balanced."""
    rng = np.random.default_rng(seed)
    assign = np.empty(d.instance_count, dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(d.labels == cls)
        if len(idx) < k:
            raise DatasetError(f"class {cls} has {len(idx)} instances, fewer than k={k}")
        idx = rng.permutation(idx)
        assign[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    return FoldPlan(k, assign, seed)
