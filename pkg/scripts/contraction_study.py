"""Hilbert-metric behaviour of the loop precision map on random models.

Two pair families per model:
  random      independent PD pairs at random scales
  near-ray    X = t Y + eps P, almost on a common ray, t log-uniform in [1e-2, 1e2]

Random pairs contract strongly. Near-ray pairs can move apart: the loop map
is not homogeneous, so it sees the scale gap t that d_H ignores, and the
ratio d_H(Psi X, Psi Y) / d_H(X, Y) can exceed 1 when d_H(X, Y) is tiny.

    python3 scripts/contraction_study.py --models 20 --state-dim 2
"""

import argparse
import sys

import numpy as np

from recipbp import random_model, sample
from recipbp.loopmap import contraction_diagnostics, extract_maps, random_pd
from recipbp.model import evidence_messages


def near_ray_pairs(rng, n, count, eps):
    out = []
    for _ in range(count):
        Y = random_pd(rng, n)
        P = random_pd(rng, n)
        t = 10.0 ** rng.uniform(-2, 2)
        out.append((t * Y + eps * P / np.linalg.norm(P), Y))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--num-nodes", type=int, default=6)
    p.add_argument("--state-dim", type=int, default=2)
    p.add_argument("--coupling", type=float, default=0.5)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-6)
    args = p.parse_args(argv)
    if args.state_dim < 2:
        p.error("the Hilbert metric is identically 0 on scalars; use --state-dim >= 2")

    print(f"{'seed':>4} {'random_max':>11} {'random_mean':>12} {'near_ray_max':>13} "
          f"{'near_ray_frac>1':>16}")
    for seed in range(args.models):
        model = random_model(args.num_nodes, args.state_dim, args.state_dim, args.coupling, seed)
        _, ev = sample(model, seed + 10_000, 1)[0]
        cm = extract_maps(model, evidence_messages(model, ev))
        rnd = contraction_diagnostics(cm, args.pairs, seed).ratio_values
        rng = np.random.default_rng(seed)
        ray = contraction_diagnostics(
            cm, points=near_ray_pairs(rng, args.state_dim, args.pairs, args.eps)).ratio_values
        print(f"{seed:4d} {rnd.max():11.2e} {rnd.mean():12.2e} {ray.max():13.2e} "
              f"{np.mean(ray > 1):16.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
