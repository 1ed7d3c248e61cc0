"""Stratified k-fold accuracy / G-Mean / AUC for the three tree-ensemble baselines."""

import argparse

import numpy as np

from rlforest.baselines import CartConfig, adaboost, gbdt_fit, random_forest, sqrt_rule
from rlforest.dataset import load, stratified_folds
from rlforest.metrics import accuracy, auc_from_labels, confusion, g_mean
from rlforest.models import Scaler


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("data", help="KEEL .dat or CSV file")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=100)
    args = p.parse_args()

    d = load(args.data)
    plan = stratified_folds(d, args.folds, args.seed)
    M = d.attribute_count
    fits = {
        "RandomForest": lambda X, y, s: random_forest(X, y, args.trees,
                                                      CartConfig(feature_subset=sqrt_rule(M)), s),
        "Adaboost": lambda X, y, s: adaboost(X, y, 50),
        "GBDT": lambda X, y, s: gbdt_fit(X, y, 100, 0.1, 3, s),
    }
    print(f"{d.name}: {d.instance_count} instances, {M} attributes, {args.folds} folds")
    for name, fit in fits.items():
        rows = []
        for f in range(args.folds):
            tr, te = plan.split(f)
            sc = Scaler.fit(d.features[tr])
            model = fit(sc.transform(d.features[tr]), d.labels[tr], args.seed + f)
            c = confusion(model.predict(sc.transform(d.features[te])), d.labels[te])
            rows.append((accuracy(c), g_mean(c), auc_from_labels(c)))
        acc, gm, auc = np.mean(rows, axis=0)
        print(f"  {name:<13} accuracy {acc:.3f}  g_mean {gm:.3f}  auc {auc:.3f}")


if __name__ == "__main__":
    main()
