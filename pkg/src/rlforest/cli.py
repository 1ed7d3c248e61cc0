"""Experiment runner: ``rlforest train|baseline|compare|predict``.

Exit codes: 0 success, 1 internal error, 2 input/validation error,
3 schema or model mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds
from .baselines import CartConfig, adaboost, gbdt_fit, random_forest, sqrt_rule
from .env import EnvConfig, ForestEnv, default_metric
from .fileio import atomic_write
from .mahsac import TrainConfig, train
from .metrics import METRICS, auc_from_scores, confusion
from .models import ModelFormatError, Scaler, dump_model, load_model, predict_scores
from .stats import ScoreTable, format_report

log = logging.getLogger("rlforest")

METHOD_NAME = "MA-H-SAC-DF"
BASELINES = ("random_forest", "adaboost", "gbdt")
METRICS_HEADER = "dataset,fold,method,metric,value"


class UsageError(Exception):
    """Bad input; exit code 2."""


class SchemaError(Exception):
    """Model/data mismatch; exit code 3."""


@dataclass
class DatasetSpec:
    path: str
    label_column: object = -1
    positive_label: str | None = None
    name: str | None = None


@dataclass
class ExperimentConfig:
    datasets: list
    seed: int
    cv_k: int = 10
    cv_seed: int = 0
    metrics: tuple = ("accuracy", "g_mean", "auc")
    output_dir: str | None = None
    env: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)


def load_config(path, seed_override=None) -> ExperimentConfig:
    if path is None:
        raise UsageError("--config is required")
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON: {e}") from None
    base = os.path.dirname(os.path.abspath(path))
    specs = []
    for entry in raw.get("datasets", []):
        if isinstance(entry, str):
            entry = {"path": entry}
        p = entry.get("path")
        if p is None:
            raise UsageError(f"{path}: dataset entry without 'path'")
        if not os.path.isabs(p):
            p = os.path.join(base, p)
        if not os.path.exists(p):
            raise UsageError(f"dataset file not found: {p}")
        specs.append(DatasetSpec(p, entry.get("label_column", -1), entry.get("positive_label"),
                                 entry.get("name")))
    if not specs:
        raise UsageError(f"{path}: no datasets listed")
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise UsageError(f"{path}: an explicit 'seed' (or --seed) is required")
    cv = raw.get("cv", {})
    metrics = tuple(raw.get("metrics", ("accuracy", "g_mean", "auc")))
    for m in metrics:
        if m not in METRICS and m != "auc_score":
            raise UsageError(f"{path}: unknown metric {m!r}")
    return ExperimentConfig(specs, int(seed), int(cv.get("k", 10)), int(cv.get("seed", seed)),
                            metrics, raw.get("output_dir"), raw.get("env", {}),
                            raw.get("train", {}), raw.get("baselines", {}))


def resolve_out(args_out, cfg_out=None) -> str:
    return args_out or cfg_out or os.environ.get("RLFOREST_OUT") or "rlforest_out"


def _load_dataset(spec: DatasetSpec) -> ds.Dataset:
    try:
        d = ds.load(spec.path, spec.label_column, spec.positive_label)
    except ds.DatasetError as e:
        raise UsageError(str(e)) from None
    if spec.name:
        d = ds.Dataset(spec.name, d.features, d.labels, d.attribute_names)
    return d


def evaluate(model, X, y, metrics) -> dict:
    pred = model.predict(X)
    c = confusion(pred, y)
    out = {}
    for m in metrics:
        if m == "auc_score":
            out[m] = auc_from_scores(predict_scores(model, X), y)
        else:
            out[m] = METRICS[m](c)
    return out


def _metric_rows(dname, fold, method, values):
    return [f"{dname},{fold},{method},{m},{v!r}" for m, v in values.items()]


def _fold_data(d, plan, fold):
    tr, te = plan.split(fold)
    train_d, test_d = d.subset(tr), d.subset(te)
    scaler = Scaler.fit(train_d.features)
    return (ds.Dataset(d.name, scaler.transform(train_d.features), train_d.labels),
            ds.Dataset(d.name, scaler.transform(test_d.features), test_d.labels), scaler)


def _fold_seed(seed, di, fold):
    return int(np.random.SeedSequence([seed, di, fold]).generate_state(1)[0])


# -- workers (module level so they pickle for process pools) ---------------------

def _train_fold(job):
    cfg, di, d, plan, fold, out_dir = job
    train_d, test_d, scaler = _fold_data(d, plan, fold)
    env_kw = dict(cfg.env)
    metric = env_kw.pop("score_metric", None) or default_metric(train_d)
    env_cfg = EnvConfig(attribute_count=d.attribute_count, score_metric=metric,
                        n_agents=env_kw.pop("n_agents", 3), depth=env_kw.pop("depth", 3), **env_kw)
    tcfg = TrainConfig(**{**cfg.train, "seed": _fold_seed(cfg.seed, di, fold)})
    env = ForestEnv(env_cfg, train_d)
    result = train(env, tcfg)
    fold_dir = os.path.join(out_dir, d.name, f"fold{fold}")
    result.trainer.save(os.path.join(fold_dir, "checkpoint"))
    atomic_write(os.path.join(fold_dir, "forest.model"),
                 dump_model(result.forest, d.attribute_count, scaler))
    atomic_write(os.path.join(fold_dir, "curve.csv"), result.curve_text())
    values = evaluate(result.forest, test_d.features, test_d.labels, cfg.metrics)
    return _metric_rows(d.name, fold, METHOD_NAME, values)


def _baseline_fold(job):
    cfg, di, d, plan, fold, out_dir = job
    train_d, test_d, scaler = _fold_data(d, plan, fold)
    X, y = train_d.features, train_d.labels
    seed = _fold_seed(cfg.seed, di, fold)
    bcfg = cfg.baselines
    rows = []
    for method in bcfg.get("methods", BASELINES):
        opts = bcfg.get(method, {})
        if method == "random_forest":
            cart = CartConfig(max_depth=opts.get("max_depth"),
                              feature_subset=opts.get("feature_subset", sqrt_rule(d.attribute_count)),
                              min_samples_split=opts.get("min_samples_split", 2))
            model = random_forest(X, y, opts.get("n_trees", 100), cart, seed,
                                  opts.get("bootstrap", True))
            name = "RandomForest"
        elif method == "adaboost":
            model = adaboost(X, y, opts.get("rounds", 50), opts.get("max_depth", 1))
            name = "Adaboost"
        elif method == "gbdt":
            model = gbdt_fit(X, y, opts.get("stages", 100), opts.get("learning_rate", 0.1),
                             opts.get("depth", 3), seed)
            name = "GBDT"
        else:
            raise UsageError(f"unknown baseline {method!r}")
        atomic_write(os.path.join(out_dir, d.name, f"fold{fold}", f"{method}.model"),
                     dump_model(model, d.attribute_count, scaler))
        rows += _metric_rows(d.name, fold, name, evaluate(model, test_d.features, test_d.labels,
                                                          cfg.metrics))
    return rows


def _run_folds(worker, cfg, out_dir, jobs):
    tasks = []
    for di, spec in enumerate(cfg.datasets):
        d = _load_dataset(spec)
        try:
            plan = ds.stratified_folds(d, cfg.cv_k, cfg.cv_seed)
        except ds.DatasetError as e:
            raise UsageError(f"{spec.path}: {e}") from None
        atomic_write(os.path.join(out_dir, d.name, "folds.txt"), plan.to_text())
        tasks += [(cfg, di, d, plan, f, out_dir) for f in range(cfg.cv_k)]
    if jobs <= 1:
        results = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, tasks))
    rows = [METRICS_HEADER] + [r for res in results for r in res]
    path = os.path.join(out_dir, "metrics.csv")
    atomic_write(path, "\n".join(rows) + "\n")
    return path


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = os.path.join(resolve_out(args.out, cfg.output_dir), "train")
    path = _run_folds(_train_fold, cfg, out, args.jobs)
    print(path)
    return 0


def cmd_baseline(args) -> int:
    cfg = load_config(args.config, args.seed)
    for m in cfg.baselines.get("methods", BASELINES):
        if m not in BASELINES:
            raise UsageError(f"unknown baseline {m!r}")
    out = os.path.join(resolve_out(args.out, cfg.output_dir), "baseline")
    path = _run_folds(_baseline_fold, cfg, out, args.jobs)
    print(path)
    return 0


def read_metrics(paths) -> dict:
    """{metric: {(dataset, method): [values]}} plus method/dataset order."""
    data, methods, datasets = {}, [], []
    for p in paths:
        if not os.path.exists(p):
            raise UsageError(f"metrics file not found: {p}")
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise UsageError(f"{p}: empty file")
        if ",".join(rows[0]) != METRICS_HEADER:
            # a ready-made score table: dataset,<method>,<method>,...
            st = ScoreTable.from_csv("\n".join(",".join(r) for r in rows))
            rows = [rows[0]] + [[dname, "0", m, "score", repr(float(v))]
                                for dname, row in zip(st.datasets, st.scores)
                                for m, v in zip(st.methods, row)]
        for r in rows[1:]:
            if len(r) != 5:
                raise UsageError(f"{p}: malformed metrics row {r}")
            dname, _, method, metric, value = r
            data.setdefault(metric, {}).setdefault((dname, method), []).append(float(value))
            if method not in methods:
                methods.append(method)
            if dname not in datasets:
                datasets.append(dname)
    return data, methods, datasets


def build_score_table(data, methods, datasets, metric) -> ScoreTable:
    if metric not in data:
        raise UsageError(f"metric {metric!r} not present (have {sorted(data)})")
    cells = data[metric]
    use = [d for d in datasets if all((d, m) in cells for m in methods)]
    if not use:
        raise UsageError(f"no dataset has scores for every method under {metric!r}")
    return ScoreTable(methods, use, [[np.mean(cells[(d, m)]) for m in methods] for d in use])


def cmd_compare(args) -> int:
    data, methods, datasets = read_metrics(args.metrics)
    wanted = [args.metric] if args.metric else sorted(data)
    base = args.base or (METHOD_NAME if METHOD_NAME in methods else methods[-1])
    if base not in methods:
        raise UsageError(f"base method {base!r} not in {methods}")
    out_dir = resolve_out(args.out)
    text = ""
    for metric in wanted:
        st = build_score_table(data, methods, datasets, metric)
        name = {"accuracy": "Accuracy", "g_mean": "G-Mean", "auc": "AUC"}.get(metric, metric)
        text += f"== {metric} ==\n" + format_report(st, base, name, args.alpha)
    atomic_write(os.path.join(out_dir, "compare.txt"), text)
    sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    if not args.model or not os.path.exists(args.model):
        raise UsageError(f"model file not found: {args.model}")
    if not args.data or not os.path.exists(args.data):
        raise UsageError(f"data file not found: {args.data}")
    with open(args.model) as fh:
        try:
            model, M, scaler = load_model(fh.read())
        except (ModelFormatError, ValueError) as e:
            raise SchemaError(f"{args.model}: {e}") from None
    X = _read_features(args.data, args.label_column, args.unlabeled)
    if X.shape[1] != M:
        raise SchemaError(f"attribute count mismatch: model expects {M}, data has {X.shape[1]}")
    if scaler is not None:
        X = scaler.transform(X)
    pred = model.predict(X)
    scores = predict_scores(model, X)
    lines = ["index,prediction,score"] + [f"{i},{int(p)},{float(s)!r}"
                                          for i, (p, s) in enumerate(zip(pred, scores))]
    path = os.path.join(resolve_out(args.out), "predictions.csv")
    atomic_write(path, "\n".join(lines) + "\n")
    print(path)
    return 0


def _read_features(path, label_column, unlabeled):
    if not unlabeled:
        try:
            return ds.load(path, label_column if label_column is not None else -1).features
        except ds.DatasetError as e:
            raise UsageError(str(e)) from None
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="rlforest", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (fallback: $RLFOREST_OUT)")
        sp.add_argument("-v", "--verbose", action="store_true")

    for name, fn in (("train", cmd_train), ("baseline", cmd_baseline)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="experiment JSON file")
        sp.add_argument("--jobs", type=int, default=1, help="parallel folds; 1 is bitwise reproducible")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        common(sp)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("compare")
    sp.add_argument("metrics", nargs="+", help="metrics CSVs or score-table CSVs")
    sp.add_argument("--alpha", type=float, default=0.1)
    sp.add_argument("--metric")
    sp.add_argument("--base")
    common(sp)
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("predict")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-column", type=int)
    sp.add_argument("--unlabeled", action="store_true", help="headed CSV of features only")
    common(sp)
    sp.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
