"""Save and load any fitted model in the shared node-line text format.

A model file starts with ``#model <kind>`` and ``#attributes <M>``, optionally
``#scale_lo``/``#scale_hi`` rows holding the min-max ranges the model was
trained under, then one ``#tree i [alpha]`` block per member tree.
"""

from __future__ import annotations

import numpy as np

from .baselines import AdaBoost, CartTree, GbdtState, RandomForest
from .tree import ForestModel, tree_from_text, tree_to_text


class ModelFormatError(ValueError):
    pass


class Scaler:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    @classmethod
    def fit(cls, X):
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X):
        span = self.hi - self.lo
        const = span == 0
        out = (np.asarray(X, dtype=float) - self.lo) / np.where(const, 1.0, span)
        out[:, const] = 0.5
        return np.clip(out, 0.0, 1.0)


def _floats(vals):
    return " ".join(repr(float(v)) for v in vals)


def dump_model(model, attribute_count: int, scaler: Scaler | None = None) -> str:
    head = []
    blocks = []
    if isinstance(model, ForestModel):
        kind = "forest"
        blocks = [(f"#tree {i}", tree_to_text(t)) for i, t in enumerate(model.trees)]
    elif isinstance(model, RandomForest):
        kind = "random_forest"
        blocks = [(f"#tree {i}", t.to_text()) for i, t in enumerate(model.trees)]
    elif isinstance(model, AdaBoost):
        kind = "adaboost"
        blocks = [(f"#tree {i} {a!r}", t.to_text())
                  for i, (a, t) in enumerate(zip(model.alphas, model.stumps))]
    elif isinstance(model, GbdtState):
        kind = "gbdt"
        head = [f"#init {model.init_score!r}", f"#learning_rate {model.learning_rate!r}"]
        blocks = [(f"#tree {i}", t.to_text(label_leaves=False)) for i, t in enumerate(model.stages)]
    else:
        raise ModelFormatError(f"cannot serialize {type(model).__name__}")
    lines = [f"#model {kind}", f"#attributes {attribute_count}"] + head
    if scaler is not None:
        lines += [f"#scale_lo {_floats(scaler.lo)}", f"#scale_hi {_floats(scaler.hi)}"]
    text = "\n".join(lines) + "\n"
    for header, body in blocks:
        text += header + "\n" + body
    return text


def load_model(text):
    """Returns (model, attribute_count, scaler or None)."""
    meta, blocks = {}, []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#tree"):
            blocks.append((s.split()[2:], []))
        elif s.startswith("#"):
            key, _, rest = s[1:].partition(" ")
            meta[key] = rest.strip()
        else:
            if not blocks:
                raise ModelFormatError("node line before any #tree header")
            blocks[-1][1].append(s)
    kind = meta.get("model")
    if kind is None or "attributes" not in meta:
        raise ModelFormatError("missing #model or #attributes header")
    M = int(meta["attributes"])
    scaler = None
    if "scale_lo" in meta:
        scaler = Scaler([float(v) for v in meta["scale_lo"].split()],
                        [float(v) for v in meta["scale_hi"].split()])
    if not blocks:
        raise ModelFormatError("model has no trees")
    if kind == "forest":
        model = ForestModel([tree_from_text(b) for _, b in blocks])
    elif kind == "random_forest":
        model = RandomForest([CartTree.from_text(b) for _, b in blocks])
    elif kind == "adaboost":
        model = AdaBoost([CartTree.from_text(b) for _, b in blocks],
                         [float(extra[0]) for extra, _ in blocks])
    elif kind == "gbdt":
        model = GbdtState(float(meta["learning_rate"]), float(meta["init"]),
                          [CartTree.from_text(b) for _, b in blocks])
    else:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    return model, M, scaler


def predict_scores(model, X) -> np.ndarray:
    """Continuous score per row, higher meaning more positive."""
    if isinstance(model, ForestModel):
        return model.vote_fraction(X)
    return model.predict_score(X)
