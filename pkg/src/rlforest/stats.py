"""Friedman / Nemenyi comparison of k methods over N datasets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import f as f_dist
from scipy.stats import rankdata


class StatsError(ValueError):
    pass


# Studentized range statistic divided by sqrt(2), infinite dof (Demsar 2006).
Q_ALPHA = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780, 9: 2.855, 10: 2.920},
}


@dataclass
class ScoreTable:
    methods: list
    datasets: list
    scores: np.ndarray

    def __post_init__(self):
        self.methods = [str(m) for m in self.methods]
        self.datasets = [str(d) for d in self.datasets]
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.datasets), len(self.methods)):
            raise StatsError(f"scores shape {self.scores.shape} does not match "
                             f"{len(self.datasets)} datasets x {len(self.methods)} methods")
        if not np.isfinite(self.scores).all():
            raise StatsError("score table has missing entries")

    @property
    def k(self) -> int:
        return len(self.methods)

    @property
    def N(self) -> int:
        return len(self.datasets)

    def column(self, method) -> np.ndarray:
        return self.scores[:, self.methods.index(method)]

    def reorder(self, methods) -> "ScoreTable":
        idx = [self.methods.index(m) for m in methods]
        return ScoreTable(list(methods), self.datasets, self.scores[:, idx])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset"] + self.methods)
        for name, row in zip(self.datasets, self.scores):
            w.writerow([name] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text) -> "ScoreTable":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows or len(rows[0]) < 2:
            raise StatsError("score CSV needs a header with at least one method")
        header, body = rows[0], rows[1:]
        return cls(header[1:], [r[0] for r in body], [[float(v) for v in r[1:]] for r in body])


@dataclass
class RankTable:
    methods: list
    ranks: np.ndarray

    @property
    def avg_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    @property
    def k(self) -> int:
        return self.ranks.shape[1]

    @property
    def N(self) -> int:
        return self.ranks.shape[0]


def rank(st: ScoreTable, higher_is_better=True, ties="average") -> RankTable:
    """Rank methods within each dataset, 1 = best.

    ``ties="average"`` gives tied methods the mean of their ranks;
    ``ties="ordinal"`` breaks ties by column order.
    """
    if ties not in ("average", "ordinal"):
        raise StatsError(f"unknown tie rule {ties!r}")
    s = -st.scores if higher_is_better else st.scores
    ranks = np.array([rankdata(row, method=ties) for row in s], dtype=float)
    return RankTable(list(st.methods), ranks)


def friedman(rt: RankTable):
    """Return (chi2_F, F_F) for the average ranks."""
    k, N = rt.k, rt.N
    r = rt.avg_ranks
    chi2 = 12.0 * N / (k * (k + 1)) * (np.sum(r ** 2) - k * (k + 1) ** 2 / 4.0)
    chi2 = 0.0 if abs(chi2) < 1e-12 else float(chi2)  # float noise at all-equal ranks
    denom = N * (k - 1) - chi2
    if denom == 0:
        raise StatsError("degenerate Friedman statistic: N(k-1) equals chi2_F")
    return chi2, (N - 1) * chi2 / denom


def nemenyi_cd(k: int, N: int, alpha: float = 0.1) -> float:
    try:
        q = Q_ALPHA[alpha][k]
    except KeyError:
        raise StatsError(f"no tabulated q for alpha={alpha}, k={k}") from None
    return q * math.sqrt(k * (k + 1) / (6.0 * N))


def f_critical(alpha: float, dfn: int, dfd: int) -> float:
    return float(f_dist.ppf(1.0 - alpha, dfn, dfd))


def win_tie_loss(st: ScoreTable, base: str, decimals: int = 3, higher_is_better=True) -> dict:
    """Per competitor: (#datasets base wins, ties, losses) at printed precision."""
    b = np.round(st.column(base), decimals)
    out = {}
    for m in st.methods:
        if m == base:
            continue
        o = np.round(st.column(m), decimals)
        better = b > o if higher_is_better else b < o
        worse = b < o if higher_is_better else b > o
        out[m] = (int(better.sum()), int((b == o).sum()), int(worse.sum()))
    return out


@dataclass
class SignificanceReport:
    chi2: float
    ff: float
    f_crit: float
    cd: float
    rejected: bool
    avg_ranks: dict
    flags: dict


def significance_report(st: ScoreTable, base: str, alpha: float = 0.1,
                        higher_is_better=True, ties="average") -> SignificanceReport:
    """Friedman test; when it rejects, flag competitors whose average rank
    trails the base by more than the Nemenyi critical difference."""
    rt = rank(st, higher_is_better, ties)
    chi2, ff = friedman(rt)
    fc = f_critical(alpha, st.k - 1, (st.k - 1) * (st.N - 1))
    cd = nemenyi_cd(st.k, st.N, alpha)
    r = dict(zip(st.methods, rt.avg_ranks))
    rejected = ff > fc
    flags = {m: bool(rejected and r[m] - r[base] > cd) for m in st.methods if m != base}
    return SignificanceReport(chi2, ff, fc, cd, rejected, r, flags)


def format_report(st: ScoreTable, base: str | None = None, metric_name="Score",
                  alpha: float = 0.1, ties="average") -> str:
    """Aligned text table with Avg, Avg.Rank, Win/Tie/Loss and Fr.T rows."""
    if base is None:
        base = st.methods[-1]
    width = max(12, max(len(d) for d in st.datasets + ["Win/Tie/Loss"]) + 2)
    colw = max(10, max(len(m) for m in st.methods) + 2)

    def line(label, cells):
        return label.ljust(width) + "".join(str(c).rjust(colw) for c in cells)

    out = [line("Datasets", st.methods)]
    for name, row in zip(st.datasets, st.scores):
        out.append(line(name, [f"{v:.3f}" for v in row]))
    out.append(line(f"Avg.{metric_name}", [f"{v:.3f}" for v in st.scores.mean(axis=0)]))
    if st.k < 2:
        return "\n".join(out) + "\n"
    rt = rank(st, ties=ties)
    out.append(line("Avg.Rank", [f"{v:.3f}" for v in rt.avg_ranks]))
    wtl = win_tie_loss(st, base)
    out.append(line("Win/Tie/Loss", ["Base" if m == base else "%d/%d/%d" % wtl[m]
                                     for m in st.methods]))
    if st.N >= 2 and st.k in Q_ALPHA.get(alpha, {}):
        rep = significance_report(st, base, alpha, ties=ties)
        out.append(line("Fr.T", ["Base" if m == base else ("*" if rep.flags[m] else "-")
                                 for m in st.methods]))
        out.append(f"chi2_F={rep.chi2:.3f} F_F={rep.ff:.3f} "
                   f"F_crit={rep.f_crit:.3f} CD={rep.cd:.3f} alpha={alpha}")
    return "\n".join(out) + "\n"
