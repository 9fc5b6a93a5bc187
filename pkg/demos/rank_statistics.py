"""Rank statistics of the accumulated sketch Gram matrix S = sum_i Gi^T Gi.

The eigen-space decoder inverts S on its range, so what matters is how often
S is rank-deficient (delta). At nk = d deficiency is rare but real; growing
d at fixed nk makes full rank (min(nk, d)) overwhelming.

Run:
    python3 demos/rank_statistics.py
    python3 demos/rank_statistics.py --trials 20000
"""

import argparse

from sketchmean.harness import run_rank_experiment


def show(n: int, d: int, k: int, trials: int, seed: int) -> None:
    rep = run_rank_experiment(n, d, k, trials, master_seed=seed)
    print(f"n={n} d={d} k={k} (nk={n * k}), {trials} trials: "
          f"delta = P(rank < {rep.full_rank}) = {rep.delta:.4f}")
    for rank in sorted(rep.counts):
        frac = rep.counts[rank] / trials
        bar = "#" * max(1, round(50 * frac))
        print(f"  rank {rank:3d}: {frac:8.4f} {bar}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    show(8, 32, 4, args.trials, args.seed)   # nk = d: occasional deficiency
    print()
    show(8, 64, 4, args.trials, args.seed)   # nk = d/2: full rank essentially always
    print()
    show(4, 32, 8, args.trials, args.seed)   # same nk = d, fewer/larger sketches


if __name__ == "__main__":
    main()
