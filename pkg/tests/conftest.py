import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_CRITERIA = []


def record_criterion(label, passed, detail):
    """Record and print one acceptance line; the summary repeats them at the end."""
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    _CRITERIA.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def blobs(n_per_class=100, seed=123):
    """Two Gaussian blobs, separable on attribute 0, with a noise attribute."""
    r = np.random.default_rng(seed)
    a = np.column_stack([r.normal(0.3, 0.05, n_per_class), r.normal(0.5, 0.15, n_per_class)])
    b = np.column_stack([r.normal(0.7, 0.05, n_per_class), r.normal(0.5, 0.15, n_per_class)])
    X = np.vstack([a, b])
    y = np.r_[np.zeros(n_per_class, int), np.ones(n_per_class, int)]
    return X, y
