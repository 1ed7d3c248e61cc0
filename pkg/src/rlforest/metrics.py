"""Binary classification scores; label 1 is the positive (minority) class."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.positives + self.negatives

    def swapped(self) -> "Confusion":
        return Confusion(tp=self.tn, fn=self.fp, tn=self.tp, fp=self.fn)


def confusion(pred, truth) -> Confusion:
    pred = np.asarray(pred).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if pred.shape != truth.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise MetricError("empty prediction")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    return Confusion(tp, fn, tn, fp)


def accuracy(c: Confusion) -> float:
    return (c.tp + c.tn) / c.total


def _rates(c: Confusion):
    if c.positives == 0 or c.negatives == 0:
        raise MetricError("both classes must be present in the truth labels")
    return c.tp / c.positives, c.tn / c.negatives


def tpr(c: Confusion) -> float:
    return _rates(c)[0]


def tnr(c: Confusion) -> float:
    return _rates(c)[1]


def g_mean(c: Confusion) -> float:
    sens, spec = _rates(c)
    return math.sqrt(sens * spec)


def auc_from_labels(c: Confusion) -> float:
    """AUC of the single ROC point (1-TNR, TPR) joined to the corners."""
    sens, spec = _rates(c)
    return (sens + spec) / 2


def auc_from_scores(scores, truth) -> float:
    """Mann-Whitney estimate P(s+ > s-) + P(s+ == s-)/2."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth).astype(np.int64)
    if scores.shape != truth.shape:
        raise MetricError("length mismatch")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("both classes must be present in the truth labels")
    r = rankdata(scores)
    u = r[truth == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


METRICS = {
    "accuracy": accuracy,
    "g_mean": g_mean,
    "auc": auc_from_labels,
}


def score(metric: str, pred, truth) -> float:
    try:
        fn = METRICS[metric]
    except KeyError:
        raise MetricError(f"unknown metric {metric!r}") from None
    return fn(confusion(pred, truth))
