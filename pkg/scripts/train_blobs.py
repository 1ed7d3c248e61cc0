"""Train the multi-agent forest builder on two synthetic Gaussian blobs.

Prints per-seed best training accuracy and the late-episode mean score.
"""

import argparse

import numpy as np

from rlforest.dataset import Dataset, normalize
from rlforest.env import EnvConfig, ForestEnv
from rlforest.mahsac import TrainConfig, train


def make_blobs(n_per_class, seed):
    r = np.random.default_rng(seed)
    a = np.column_stack([r.normal(0.3, 0.05, n_per_class), r.normal(0.5, 0.15, n_per_class)])
    b = np.column_stack([r.normal(0.7, 0.05, n_per_class), r.normal(0.5, 0.15, n_per_class)])
    y = np.r_[np.zeros(n_per_class, int), np.ones(n_per_class, int)]
    return normalize(Dataset("blobs", np.vstack([a, b]), y))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--episodes", type=int, default=300)
    p.add_argument("--agents", type=int, default=3)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--curve", help="write the first seed's training curve here")
    args = p.parse_args()

    d = make_blobs(100, seed=123)
    for seed in range(args.seeds):
        env = ForestEnv(EnvConfig(args.agents, args.depth, d.attribute_count), d)
        cfg = TrainConfig(episodes=args.episodes, warmup=args.warmup,
                          batch_size=args.batch_size, seed=seed)
        res = train(env, cfg)
        late = np.mean([e.score for e in res.curve[-50:]])
        first = next((e.episode for e in res.curve if e.score >= 0.95), None)
        print(f"seed {seed}: best {res.best_score:.3f}, first >= 0.95 at episode {first}, "
              f"last-50 mean {late:.3f}")
        if args.curve and seed == 0:
            with open(args.curve, "w") as fh:
                fh.write(res.curve_text())


if __name__ == "__main__":
    main()
