"""Recompute Friedman/Nemenyi statistics for the published score tables
under both tie-handling rules."""

import argparse
import os

from rlforest.stats import ScoreTable, format_report, friedman, rank

HERE = os.path.dirname(os.path.abspath(__file__))
TABLES = os.path.join(HERE, "..", "data", "tables")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha", type=float, default=0.1)
    args = p.parse_args()
    for fname in sorted(os.listdir(TABLES)):
        with open(os.path.join(TABLES, fname)) as fh:
            st = ScoreTable.from_csv(fh.read())
        print(f"== {fname} ({st.N} datasets) ==")
        print(format_report(st, metric_name="Score", alpha=args.alpha))
        for ties in ("average", "ordinal"):
            rt = rank(st, ties=ties)
            chi2, ff = friedman(rt)
            ranks = " ".join(f"{r:.3f}" for r in rt.avg_ranks)
            print(f"  ties={ties:<8} ranks [{ranks}]  chi2_F={chi2:.3f}  F_F={ff:.3f}")
        print()


if __name__ == "__main__":
    main()
