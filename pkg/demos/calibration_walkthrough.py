"""How the unbiasedness constant beta is obtained, exactly or by Monte Carlo.

Every decoder scales its output by beta/n. For the subsampling family beta
has a closed form (a binomial reciprocal moment); for the sketch family it
is exact only for the constant transform, and is otherwise calibrated by
decoding identical probe copies and inverting the mean ratio. This script
shows both routes agreeing, and how the Monte-Carlo error shrinks with
trials.

Run:
    python3 demos/calibration_walkthrough.py
"""

import argparse

from sketchmean.calibration import calibrate_beta, exact_beta_bar
from sketchmean.transforms import Transform


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    n, d, k = args.n, args.d, args.k

    print(f"n={n} d={d} k={k}")
    print("\nclosed forms, where they exist:")
    for pipeline, tr in (
        ("rand_k", Transform("one")),
        ("rand_k", Transform("identity")),
        ("rand_k", Transform("avg", n=n)),
        ("srht", Transform("one")),
    ):
        want = exact_beta_bar(pipeline, n, d, k, tr)
        print(f"  {pipeline:7s} + {tr.kind:8s}: beta = {want:.6f}")

    print("\nMonte-Carlo route converging to the closed form (rand_k + avg):")
    tr = Transform("avg", n=n)
    want = exact_beta_bar("rand_k", n, d, k, tr)
    for trials in (200, 2000, 20000):
        res = calibrate_beta("rand_k", n, d, k, tr, trials=trials, master_seed=args.seed)
        err = abs(res.beta_bar - want) / want
        print(f"  {trials:6d} trials: beta = {res.beta_bar:.6f}  rel err {err:.2e}  "
              f"probe residual {res.probe_residual:.2e}")

    print("\nsketch + avg transform has no closed form; Monte Carlo only:")
    for trials in (500, 5000):
        res = calibrate_beta("srht", n, d, k, tr, trials=trials, master_seed=args.seed)
        print(f"  {trials:6d} trials: beta = {res.beta_bar:.6f}  "
              f"probe residual {res.probe_residual:.2e}")


if __name__ == "__main__":
    main()
