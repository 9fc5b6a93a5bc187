"""Acceptance gate: twelve end-to-end checks with pinned seeds and tolerances.

Each check exercises the library exactly as a user would and prints a single
PASS/FAIL line (with its elapsed time against the stated budget) before
asserting. Monte-Carlo sizes, targets, and windows are stated inline.
"""

import time

import numpy as np
import pytest

from sketchmean.calibration import calibrate_beta
from sketchmean.data import gen_synthetic, split_iid
from sketchmean.estimators import (
    SCHEME_TAGS,
    DecoderConfig,
    decode_for_scheme,
    encode_for_scheme,
    randk_spatial_decode,
    rps_decode_with_subsampling,
)
from sketchmean.harness import (
    gen_correlated_vectors,
    run_limit_experiment,
    run_mse_experiment,
    run_rank_experiment,
)
from sketchmean.linalg import SketchSeed, accumulate_gram, eigh, fwht, transformed_pinv
from sketchmean.tasks import Estimator, run_kmeans, run_linreg, run_power_iteration
from sketchmean.transforms import Transform, measure_correlation


def report(ok: bool, idx: int, text: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} [{idx:02d}] {text}")
    return ok


def test_01_subsample_estimator_matches_closed_form_mse():
    t0 = time.perf_counter()
    rep = run_mse_experiment(
        ("rand_k",), n=5, d=64, k=8, correlation="orthogonal",
        trials=100_000, master_seed=0, workers=1,
    )
    mse = rep.results["rand_k"].mse_mean
    dt = time.perf_counter() - t0
    want = (64 / 8 - 1) / 5  # 1.4 on orthogonal unit vectors
    ok = abs(mse - want) <= 0.02 * want and dt < 30
    assert report(
        ok, 1, f"rand_k (n=5,d=64,k=8) mse={mse:.4f} target {want}±2% [{dt:.1f}s/30s]"
    )


def test_02_sketch_with_constant_transform_recovers_rand_k():
    n, d, k, trials, master = 4, 64, 4, 100_000, 0
    t0 = time.perf_counter()
    X = np.eye(d)[:n]
    x_bar = X.mean(axis=0)
    cfg_sketch = DecoderConfig(n=n, d=d, k=k, transform=Transform("one"), beta_bar=d / k)
    cfg_plain = DecoderConfig(n=n, d=d, k=k)
    err_sketch = np.empty(trials)
    err_plain = np.empty(trials)
    for t in range(trials):
        seeds = [SketchSeed(master, i, t) for i in range(n)]
        msgs = [encode_for_scheme(X[i], "rps_max", seeds[i], k) for i in range(n)]
        est = decode_for_scheme(msgs, "rps_max", cfg_sketch)
        err_sketch[t] = float(((est - x_bar) ** 2).sum())
        msgs = [encode_for_scheme(X[i], "rand_k", seeds[i], k) for i in range(n)]
        est = decode_for_scheme(msgs, "rand_k", cfg_plain)
        err_plain[t] = float(((est - x_bar) ** 2).sum())
    dt = time.perf_counter() - t0
    mse_s, mse_p = float(err_sketch.mean()), float(err_plain.mean())
    diff = err_sketch - err_plain
    se = float(diff.std(ddof=1) / np.sqrt(trials))
    want = (d / k - 1) / n  # 3.75
    ok = abs(mse_s - want) <= 0.03 * want and abs(mse_s - mse_p) <= 2 * se and dt < 180
    assert report(
        ok, 2,
        f"sketch+constant-transform (n=4,d=64,k=4) mse={mse_s:.4f} target {want}±3%, "
        f"gap to rand_k {mse_s - mse_p:+.4f} (2se={2 * se:.4f}) [{dt:.1f}s/180s]",
    )


@pytest.mark.filterwarnings("ignore::sketchmean.calibration.CalibrationWarning")
def test_03_sketch_identity_transform_on_identical_vectors():
    t0 = time.perf_counter()
    ranks = run_rank_experiment(4, 64, 4, 2000, master_seed=1, workers=1)
    rep = run_mse_experiment(
        ("rps_max",), n=4, d=64, k=4, correlation="identical",
        trials=10_000, master_seed=0, beta_trials=20_000, workers=1,
    )
    mse = rep.results["rps_max"].mse_mean
    dt = time.perf_counter() - t0
    ok = ranks.delta < 0.01 and abs(mse - 3.0) <= 0.03 * 3.0 and dt < 180
    assert report(
        ok, 3,
        f"sketch+identity on identical vectors (n=4,d=64,k=4) mse={mse:.4f} "
        f"target 3.0±3% (rank-deficiency {ranks.delta:.4f}<0.01) [{dt:.1f}s/180s]",
    )


def test_04_gram_rank_statistics():
    t0 = time.perf_counter()
    tight = run_rank_experiment(8, 32, 4, 100_000, master_seed=0, workers=1)
    loose = run_rank_experiment(8, 64, 4, 10_000, master_seed=0, workers=1)
    dt = time.perf_counter() - t0
    full_frac = 1.0 - loose.delta
    ok = 0.011 <= tight.delta <= 0.031 and full_frac >= 0.999 and dt < 300
    assert report(
        ok, 4,
        f"rank(S): nk=d=32 deficiency {tight.delta:.4f} in [0.011,0.031]; "
        f"nk=32,d=64 full-rank fraction {full_frac:.4f}>=0.999 [{dt:.1f}s/300s]",
    )


def test_05_counting_decoder_equals_eigen_decoder_on_selection_rows():
    n, d, k = 4, 16, 2
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for draw in range(100):
        X = rng.standard_normal((n, d))
        R = measure_correlation(X)
        seeds = [SketchSeed(50, i, draw) for i in range(n)]
        msgs = [encode_for_scheme(X[i], "rand_k", seeds[i], k) for i in range(n)]
        transforms = (
            Transform("one"),
            Transform("identity"),
            Transform("avg", n=n),
            Transform("opt", n=n, R=R),
        )
        for tr in transforms:
            cfg = DecoderConfig(n=n, d=d, k=k, transform=tr, beta_bar=1.9)
            a = randk_spatial_decode(msgs, cfg)
            b = rps_decode_with_subsampling(msgs, cfg)
            worst = max(worst, float(np.abs(a - b).max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 10
    assert report(
        ok, 5,
        f"counting vs eigen-pipeline decode on 100 draws x 4 transforms: "
        f"max |diff|={worst:.2e}<=1e-10 [{dt:.1f}s/10s]",
    )


def test_06_shared_rotation_gives_no_gain_over_rand_k():
    t0 = time.perf_counter()
    rep = run_mse_experiment(
        ("naive_rotation", "rand_k"), n=4, d=64, k=8, correlation="orthogonal",
        trials=10_000, master_seed=0, workers=1,
    )
    dt = time.perf_counter() - t0
    gap = rep.results["naive_rotation"].mse_mean - rep.results["rand_k"].mse_mean
    se = rep.paired_se("naive_rotation", "rand_k")
    ok = abs(gap) <= 2 * se and dt < 60
    assert report(
        ok, 6,
        f"shared-rotation baseline vs rand_k (n=4,d=64,k=8): gap {gap:+.4f} "
        f"within 2se={2 * se:.4f} [{dt:.1f}s/60s]",
    )


@pytest.mark.filterwarnings("ignore::sketchmean.estimators.BudgetWarning")
def test_07_oversampled_max_transform_ratio_window():
    t0 = time.perf_counter()
    rep = run_limit_experiment(32, 32, 8, 10_000, master_seed=0, workers=1)
    dt = time.perf_counter() - t0
    ratio = rep.mse_ratio("rand_k_spatial_max", "rand_k")
    ok = 0.9 <= ratio <= 1.1 and dt < 60
    assert report(
        ok, 7,
        f"max-transform/rand_k mse ratio at nk=8d (n=32,d=32,k=8): {ratio:.4f} "
        f"required in [0.9,1.1]; closed-form value for this configuration is "
        f"1.1676 (binomial reciprocal moments), outside the window [{dt:.1f}s/60s]",
    )


@pytest.mark.filterwarnings("ignore::sketchmean.calibration.CalibrationWarning")
def test_08_correlation_ordering_of_the_three_estimators():
    t0 = time.perf_counter()
    pieces = []
    all_ok = True
    for R in (2.0, 4.0, 6.0):
        rep = run_mse_experiment(
            ("rps_opt", "rand_k_spatial_opt", "rand_k"), n=8, d=128, k=4,
            correlation=R, trials=10_000, master_seed=101, beta_trials=20_000, workers=1,
        )
        m = {s: rep.results[s].mse_mean for s in rep.results}
        gap1 = m["rand_k_spatial_opt"] - m["rps_opt"]
        se1 = rep.paired_se("rand_k_spatial_opt", "rps_opt")
        gap2 = m["rand_k"] - m["rand_k_spatial_opt"]
        se2 = rep.paired_se("rand_k", "rand_k_spatial_opt")
        ok_r = gap1 > 2 * se1 and gap2 > 2 * se2
        all_ok = all_ok and ok_r
        pieces.append(f"R={R:g}: gaps {gap1:+.4f}/{2 * se1:.4f} and {gap2:+.4f}/{2 * se2:.4f}")
    dt = time.perf_counter() - t0
    ok = all_ok and dt < 600
    assert report(
        ok, 8,
        "ordering sketch-opt < counting-opt < rand_k (n=8,d=128,k=4), gap vs 2se per R -- "
        + "; ".join(pieces)
        + f"; reference runs at 10x trials put the sketch-vs-counting gap at "
        f"-0.000+-0.022 for R=2 and +0.077+-0.019 for R=4, so a 2-se separation "
        f"at 1e4 trials is not attainable for those two R values [{dt:.1f}s/600s]",
    )


def test_09_calibration_constants():
    t0 = time.perf_counter()
    b_plain = calibrate_beta("rand_k", 4, 16, 4, Transform("one"), trials=100_000, master_seed=0)
    b_sketch = calibrate_beta("srht", 4, 16, 4, Transform("one"), trials=100_000, master_seed=0)
    # n=1, k=d: the sketch is orthogonal, S = I is always full rank, and the
    # identity-transform decode map is the identity, so beta must be 1
    b_identity = calibrate_beta(
        "srht", 1, 16, 16, Transform("identity"), trials=100_000, master_seed=0
    )
    dt = time.perf_counter() - t0
    vals = (b_plain.beta_bar, b_sketch.beta_bar, b_identity.beta_bar)
    targets = (4.0, 4.0, 1.0)
    ok = all(abs(v - w) <= 0.02 * w for v, w in zip(vals, targets)) and dt < 120
    assert report(
        ok, 9,
        f"normalizers at d=16: subsample/constant {vals[0]:.4f}~4, sketch/constant "
        f"{vals[1]:.4f}~4, sketch/identity nk=d {vals[2]:.4f}~1 (each ±2%) [{dt:.1f}s/120s]",
    )


def test_10_numerical_kernels():
    t0 = time.perf_counter()
    # fast transform vs a dense Hadamard built by block doubling
    rng = np.random.default_rng(10)
    worst_fwht = 0.0
    for d in (2, 4, 8, 16, 32, 64, 128, 256):
        H = np.array([[1.0]])
        while H.shape[0] < d:
            H = np.kron(np.array([[1.0, 1.0], [1.0, -1.0]]), H)
        x = rng.standard_normal(d)
        worst_fwht = max(worst_fwht, float(np.abs(fwht(x) - H @ x).max()))
    # eigendecomposition reconstruction and pseudo-inverse identity on 100 Grams
    worst_recon = 0.0
    worst_pinv = 0.0
    for i in range(100):
        d = int(rng.choice([8, 16, 32, 64]))
        n = int(rng.integers(1, 7))
        k = int(rng.integers(1, d + 1))
        seeds = [SketchSeed(11, j, i) for j in range(n)]
        S = accumulate_gram(seeds, d, k)
        dec = eigh(S)
        recon = (dec.eigenvectors * dec.eigenvalues) @ dec.eigenvectors.T
        worst_recon = max(worst_recon, float(np.abs(recon - S).max()))
        P = transformed_pinv(dec, Transform("identity"))
        worst_pinv = max(worst_pinv, float(np.abs(S @ P @ S - S).max()))
    dt = time.perf_counter() - t0
    ok = worst_fwht <= 1e-9 and worst_recon <= 1e-8 and worst_pinv <= 1e-8 and dt < 60
    assert report(
        ok, 10,
        f"kernels: fwht vs dense {worst_fwht:.2e}<=1e-9; eigen reconstruction "
        f"{worst_recon:.2e}<=1e-8; S S+ S = S {worst_pinv:.2e}<=1e-8 [{dt:.1f}s/60s]",
    )


@pytest.mark.filterwarnings("ignore::sketchmean.estimators.BudgetWarning")
@pytest.mark.filterwarnings("ignore::sketchmean.calibration.CalibrationWarning")
def test_11_task_loops():
    t0 = time.perf_counter()

    # --- lossless runs against centralized loops written out here ---
    ds = gen_synthetic("spiked_covariance", {"m": 200, "d": 16, "ratio": 10.0}, seed=3)
    part = split_iid(ds, 4, seed=3)
    hist = run_power_iteration(part, Estimator("rand_k", k=16), rounds=30, master_seed=5)
    A = ds.features
    C = A.T @ A / A.shape[0]  # equal client sizes: the stacked covariance
    rng = np.random.default_rng((5, 0xB0))
    v = rng.normal(size=16)
    v /= np.linalg.norm(v)
    for _ in range(30):
        w = C @ v
        v = w / np.linalg.norm(w)
    err_power = float(np.abs(v - hist.final_iterate).max())

    centers = np.random.default_rng(40).normal(scale=4.0, size=(4, 8))
    ds = gen_synthetic("blobs", {"centers": centers, "m": 120, "noise": 0.6}, seed=4)
    part = split_iid(ds, 1)
    hist = run_kmeans(part, Estimator("rand_k", k=8), num_clusters=4, rounds=12, master_seed=6)
    data = ds.features
    rng = np.random.default_rng((6, 0xC1))
    centroids = data[rng.choice(data.shape[0], size=4, replace=False)].copy()
    for _ in range(12):
        dist2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(dist2, axis=1)
        for c in range(4):
            pts = data[assign == c]
            centroids[c] = pts.mean(axis=0) if pts.shape[0] else np.zeros(8)
    err_kmeans = float(np.abs(centroids - hist.final_iterate).max())

    ds = gen_synthetic("linear", {"m": 200, "d": 16, "noise": 0.3}, seed=5)
    part = split_iid(ds, 4, seed=5)
    A, y = ds.features, ds.labels
    lr = 0.9 / float(np.linalg.eigvalsh(A.T @ A / A.shape[0]).max())
    hist = run_linreg(part, Estimator("rand_k", k=16), rounds=40, learning_rate=lr, master_seed=7)
    w = np.zeros(16)
    for _ in range(40):
        w = w - lr * A.T @ (A @ w - y) / A.shape[0]
    err_linreg = float(np.abs(w - hist.final_iterate).max())

    lossless_ok = max(err_power, err_kmeans, err_linreg) <= 1e-10

    # --- compressed runs: k = d/10, n = 10, 10 repetitions, paired by seed ---
    # The spectrum ratio for power iteration is kept near 1 so the product
    # norms |C_i v| do not depend on how well v has converged; otherwise the
    # better estimator parks v at the top eigenvector where absolute errors
    # are largest and the comparison measures trajectory state, not accuracy.
    n, d, k, reps = 10, 40, 4, 10
    datasets = {
        "power": gen_synthetic("spiked_covariance", {"m": 2000, "d": d, "ratio": 1.5}, seed=21),
        "kmeans": gen_synthetic(
            "blobs",
            {"centers": np.random.default_rng(22).normal(scale=6.0, size=(4, d)), "m": 400,
             "noise": 0.5},
            seed=22,
        ),
        "linreg": gen_synthetic("linear", {"m": 2000, "d": d, "noise": 0.5}, seed=23),
    }
    A = datasets["linreg"].features
    lr = 0.3 / float(np.linalg.eigvalsh(A.T @ A / A.shape[0]).max())

    def run_task(task, scheme, master):
        partition = split_iid(datasets[task], n, seed=31)
        est = Estimator(scheme, k=k, beta_trials=2000)
        if task == "power":
            h = run_power_iteration(partition, est, rounds=40, master_seed=master)
        elif task == "kmeans":
            h = run_kmeans(partition, est, num_clusters=4, rounds=8, master_seed=master)
        else:
            h = run_linreg(partition, est, rounds=20, learning_rate=lr, master_seed=master)
        return float(h.est_errors().sum())

    pieces = []
    compressed_ok = True
    for task in ("power", "kmeans", "linreg"):
        diffs = np.array(
            [run_task(task, "rps_avg", 300 + r) - run_task(task, "rand_k", 300 + r)
             for r in range(reps)]
        )
        se = float(diffs.std(ddof=1) / np.sqrt(reps))
        ok_task = diffs.mean() < 0 and abs(diffs.mean()) > 2 * se
        compressed_ok = compressed_ok and ok_task
        pieces.append(f"{task} {diffs.mean():+.3g} (2se={2 * se:.3g})")

    dt = time.perf_counter() - t0
    ok = lossless_ok and compressed_ok and dt < 600
    assert report(
        ok, 11,
        f"tasks: lossless max dev {max(err_power, err_kmeans, err_linreg):.2e}<=1e-10; "
        f"cumulative estimation error, sketch-avg minus rand_k (k=d/10,n=10,10 reps): "
        + ", ".join(pieces) + f" [{dt:.1f}s/600s]",
    )


@pytest.mark.filterwarnings("ignore::sketchmean.calibration.CalibrationWarning")
def test_12_per_coordinate_bias_of_every_scheme():
    n, d, k, trials = 4, 16, 2, 20_000
    t0 = time.perf_counter()
    worst = 0.0
    worst_combo = ""
    exact_zero_ok = True
    for family, R_target in (("orthogonal", 0.0), ("mixed", 1.5), ("identical", 3.0)):
        vectors, realized = gen_correlated_vectors(n, d, R_target, seed=1)
        X = np.asarray(vectors)
        x_bar = X.mean(axis=0)
        estimators = {}
        for scheme in SCHEME_TAGS:
            est = Estimator(scheme, k=k, R=float(realized), beta_trials=10_000)
            est.bind(n, d, 12)
            estimators[scheme] = est
        sums = {s: np.zeros(d) for s in estimators}
        sqs = {s: np.zeros(d) for s in estimators}
        # trial-major order so all schemes reuse the same per-round sketches
        for _ in range(trials):
            for s, est in estimators.items():
                out = est.estimate_mean(X)
                sums[s] += out
                sqs[s] += out * out
        for s in estimators:
            mean = sums[s] / trials
            var = np.maximum(sqs[s] / trials - mean**2, 0.0) * trials / (trials - 1)
            se = np.sqrt(var / trials)
            bias = np.abs(mean - x_bar)
            fixed = se == 0.0  # coordinates the scheme never touches
            if np.any(bias[fixed] > 0):
                exact_zero_ok = False
            z = float((bias[~fixed] / se[~fixed]).max()) if np.any(~fixed) else 0.0
            if z > worst:
                worst, worst_combo = z, f"{s}/{family}"
    dt = time.perf_counter() - t0
    ok = worst <= 4.0 and exact_zero_ok and dt < 120
    assert report(
        ok, 12,
        f"per-coordinate bias, every scheme x three vector families "
        f"(n=4,d=16,k=2,2e4 trials): worst {worst:.2f} se ({worst_combo}) <= 4 se "
        f"[{dt:.1f}s/120s]",
    )
