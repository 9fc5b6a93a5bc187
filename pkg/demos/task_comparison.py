"""Run the three distributed tasks with compressed mean estimation.

Each round, clients send k-value messages; the server decodes a mean
estimate and updates the shared iterate. The script compares the plain
subsampling estimator against the sketch decoder with the avg transform on
power iteration, k-means, and linear regression, reporting both cumulative
estimation error and final task loss.

Run:
    python3 demos/task_comparison.py
    python3 demos/task_comparison.py --k 8 --rounds 30
"""

import argparse
import warnings

import numpy as np

from sketchmean.data import gen_synthetic, split_iid
from sketchmean.estimators import BudgetWarning
from sketchmean.tasks import Estimator, run_kmeans, run_linreg, run_power_iteration


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10, help="clients")
    ap.add_argument("--d", type=int, default=40, help="dimension")
    ap.add_argument("--k", type=int, default=4, help="per-client budget")
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    n, d, k = args.n, args.d, args.k
    warnings.simplefilter("ignore", BudgetWarning)

    datasets = {
        "power iteration": gen_synthetic(
            "spiked_covariance", {"m": 2000, "d": d, "ratio": 1.5}, seed=21),
        "k-means": gen_synthetic(
            "blobs",
            {"centers": np.random.default_rng(22).normal(scale=6.0, size=(4, d)),
             "m": 400, "noise": 0.5},
            seed=22),
        "linear regression": gen_synthetic(
            "linear", {"m": 2000, "d": d, "noise": 0.5}, seed=23),
    }
    A = datasets["linear regression"].features
    lr = 0.3 / float(np.linalg.eigvalsh(A.T @ A / A.shape[0]).max())

    print(f"n={n} d={d} k={k}, {args.rounds} rounds, master seed {args.seed}")
    for task, ds in datasets.items():
        part = split_iid(ds, n, seed=31)
        print(f"\n{task}:")
        for scheme in ("rand_k", "rps_avg"):
            est = Estimator(scheme, k=k, beta_trials=2000)
            if task == "power iteration":
                h = run_power_iteration(part, est, rounds=args.rounds, master_seed=args.seed)
            elif task == "k-means":
                h = run_kmeans(part, est, num_clusters=4, rounds=args.rounds,
                               master_seed=args.seed)
            else:
                h = run_linreg(part, est, rounds=args.rounds, learning_rate=lr,
                               master_seed=args.seed)
            cum = h.est_errors().sum()
            print(f"  {scheme:10s} cumulative est error {cum:12.4f}   "
                  f"final task loss {h.losses()[-1]:.6f}")


if __name__ == "__main__":
    main()
