import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rlforest.metrics import (Confusion, MetricError, accuracy, auc_from_labels, auc_from_scores,
                              confusion, g_mean, score, tnr, tpr)


def test_confusion_examples():
    assert confusion([1, 0], [1, 0]) == Confusion(tp=1, fn=0, tn=1, fp=0)
    assert confusion([1, 1, 0, 0], [1, 0, 1, 0]) == Confusion(tp=1, fn=1, tn=1, fp=1)
    assert confusion([0, 0, 0], [1, 1, 1]).fn == 3
    with pytest.raises(MetricError):
        confusion([1, 0], [1])


def test_scalar_examples():
    c = Confusion(tp=3, fn=1, tn=2, fp=2)
    assert accuracy(c) == 0.625
    assert g_mean(c) == pytest.approx(math.sqrt(0.75 * 0.5), abs=1e-9)
    assert g_mean(c) == pytest.approx(0.61237, abs=1e-5)
    assert auc_from_labels(c) == 0.625
    perfect = Confusion(5, 0, 5, 0)
    assert accuracy(perfect) == g_mean(perfect) == auc_from_labels(perfect) == 1.0
    assert accuracy(Confusion(0, 5, 0, 5)) == 0.0
    assert g_mean(Confusion(0, 4, 6, 0)) == 0.0
    assert auc_from_labels(Confusion(0, 4, 6, 0)) == 0.5


def test_missing_class_is_error():
    with pytest.raises(MetricError):
        g_mean(Confusion(0, 0, 3, 1))
    with pytest.raises(MetricError):
        auc_from_labels(Confusion(2, 1, 0, 0))
    with pytest.raises(MetricError):
        auc_from_scores([0.1, 0.2], [1, 1])


def test_auc_from_scores_examples():
    assert auc_from_scores([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75
    assert auc_from_scores([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc_from_scores([0.4] * 6, [1, 0, 1, 0, 0, 0]) == 0.5


confusions = st.builds(Confusion, st.integers(0, 50), st.integers(0, 50),
                       st.integers(0, 50), st.integers(0, 50)).filter(
    lambda c: c.positives > 0 and c.negatives > 0)


@given(confusions)
def test_metric_identities(c):
    g, s, p = g_mean(c), tpr(c), tnr(c)
    assert g <= max(s, p) + 1e-15
    assert g * g == pytest.approx(s * p, rel=1e-12, abs=1e-15)
    assert auc_from_labels(c) == auc_from_labels(c.swapped())


@given(st.integers(1, 40), st.integers(0, 40))
def test_balanced_equal_rates_agree(n, hits):
    hits = min(hits, n)
    c = Confusion(hits, n - hits, hits, n - hits)
    assert accuracy(c) == pytest.approx(g_mean(c)) == pytest.approx(auc_from_labels(c))


@given(st.lists(st.integers(-50, 50), min_size=2, max_size=30), st.integers(0, 2**32))
def test_auc_monotone_transform_invariant(scores, seed):
    r = np.random.default_rng(seed)
    truth = r.integers(0, 2, len(scores))
    truth[0], truth[1] = 0, 1
    s = np.array(scores, dtype=float)
    assert auc_from_scores(s, truth) == pytest.approx(auc_from_scores(s ** 3 + 7, truth))


def test_score_dispatch():
    assert score("accuracy", [1, 0, 1], [1, 0, 0]) == pytest.approx(2 / 3)
    with pytest.raises(MetricError):
        score("f1", [1], [1])
