"""Small ReLU MLPs with hand-written backprop, Adam, and the hybrid policy heads.

Inputs are batched row vectors: ``x`` has shape (batch, in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
TANH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class Mlp:
    """Affine layers with ReLU between them and an identity output."""

    def __init__(self, sizes, rng=None, weights=None, biases=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        if weights is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weights, biases = [], []
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                bound = 1.0 / math.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} parameter shapes do not match sizes {self.sizes}")
        # input widths this net has been asked to evaluate; used by CTDE checks
        self.seen_input_widths = set()

    @classmethod
    def zeros(cls, sizes):
        sizes = tuple(sizes)
        return cls(sizes, weights=[np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   biases=[np.zeros(b) for b in sizes[1:]])

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])

    def forward(self, x, keep=False):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        self.seen_input_widths.add(x.shape[1])
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        out = h[0] if single else h
        return (out, acts) if keep else out

    def backward(self, acts, dout):
        """Reverse pass. Returns (parameter grads in ``params`` order, d input)."""
        dout = np.asarray(dout, dtype=float)
        if dout.ndim == 1:
            dout = dout[None, :]
        grads = [None] * (2 * len(self.weights))
        g = dout
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                g = g * (acts[i + 1] > 0)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    # checkpoint text: header line, then per layer "W <rows>" lines and a "b" line
    def to_text(self) -> str:
        lines = ["mlp " + " ".join(str(s) for s in self.sizes)]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            lines.append(f"layer {i}")
            for row in w:
                lines.append(" ".join(repr(float(v)) for v in row))
            lines.append(" ".join(repr(float(v)) for v in b))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text) -> "Mlp":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "mlp":
            raise ValueError("not an mlp checkpoint")
        sizes = [int(s) for s in head[1:]]
        pos = 1
        weights, biases = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            if lines[pos].split() != ["layer", str(i)]:
                raise ValueError(f"expected 'layer {i}' at line {pos + 1}")
            pos += 1
            w = np.array([[float(v) for v in lines[pos + r].split()] for r in range(a)])
            pos += a
            bias = np.array([float(v) for v in lines[pos].split()])
            pos += 1
            weights.append(w.reshape(a, b))
            biases.append(bias)
        return cls(sizes, weights=weights, biases=biases)


@dataclass
class AdamState:
    shapes: list
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default=None)
    v: list = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = [np.zeros(s) for s in self.shapes]
            self.v = [np.zeros(s) for s in self.shapes]

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls([p.shape for p in params], **kw)


def adam_step(state: AdamState, params, grads):
    """In-place bias-corrected Adam update; returns ``params``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def soft_update(target, online, tau: float):
    """``target <- tau * online + (1 - tau) * target`` on parameter lists."""
    for tp, op in zip(target, online):
        tp *= 1 - tau
        tp += tau * op
    return target


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_discrete(logits, rng):
    p = softmax(logits)
    idx = int(rng.choice(p.shape[-1], p=p))
    return idx, p


def split_head(out, K):
    """Actor output (.., 3K) -> logits, mean, clamped log-std, raw log-std."""
    logits = out[..., :K]
    mu = out[..., K:2 * K]
    raw = out[..., 2 * K:3 * K]
    return logits, mu, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw


def squashed_log_prob(eps, log_std, a):
    """Log-density of a = tanh(mu + sigma*eps), per coordinate."""
    return -0.5 * eps ** 2 - log_std - HALF_LOG_2PI - np.log(1.0 - a ** 2 + TANH_EPS)


def sample_squashed_gaussian(mu, log_std, rng, eps=None):
    mu = np.asarray(mu, dtype=float)
    log_std = np.clip(np.asarray(log_std, dtype=float), LOG_STD_MIN, LOG_STD_MAX)
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    a = np.tanh(mu + np.exp(log_std) * eps)
    return a, squashed_log_prob(eps, log_std, a)
