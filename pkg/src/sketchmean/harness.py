"""Correlation-controlled MSE experiments, rank statistics, and limits.

The harness fixes a set of client vectors, then runs many independent trials
of encode -> decode for each requested scheme. Trials are paired: scheme A
and scheme B see the same client vectors and the same per-trial seed tuples,
so MSE differences can be tested with paired standard errors.

Reports keep the full per-trial squared-error arrays. Reductions happen once
at the end in trial order, which makes results bit-identical regardless of
the worker count used to produce them.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import calibrate_beta_cached, exact_beta_bar
from .errors import ParameterError
from .estimators import (
    SCHEME_TAGS,
    DecoderConfig,
    decode_for_scheme,
    encode_for_scheme,
    transform_for_scheme,
)
from .linalg import SHARED_CLIENT_INDEX, SketchSeed, accumulate_gram, default_rank_tol
from .transforms import measure_correlation

__all__ = [
    "MSE_CSV_COLUMNS",
    "RANK_CSV_COLUMNS",
    "MseReport",
    "RankReport",
    "SchemeResult",
    "gen_correlated_vectors",
    "resolve_beta",
    "run_limit_experiment",
    "run_mse_experiment",
    "run_rank_experiment",
    "write_mse_csv",
    "write_rank_csv",
]

# offset keeping calibration draws independent of experiment trial draws
_CALIBRATION_SEED_OFFSET = 1_000_003

_PARTITION_MAX_CLIENTS = 256


# ---------------------------------------------------------------------------
# correlated vector construction
# ---------------------------------------------------------------------------

def _partition_for_target(n: int, target_s: int | float) -> list[int]:
    """Group sizes (descending) whose sum is n, minimizing |sum g(g-1) - target_s|.

    Ties prefer the smaller correlation sum. Feasible sums are found by a
    boolean knapsack over part sizes; reconstruction is greedy largest-first.
    """
    if n > _PARTITION_MAX_CLIENTS:
        raise ParameterError(
            f"correlated-vector construction supports at most {_PARTITION_MAX_CLIENTS} clients, got {n}"
        )
    smax = n * (n - 1)
    reach = np.zeros((n + 1, smax + 1), dtype=bool)
    reach[0, 0] = True
    for m in range(1, n + 1):
        w = m * (m - 1)
        for j in range(m, n + 1):
            if w:
                reach[j, w:] |= reach[j - m, : smax + 1 - w]
            else:
                reach[j] |= reach[j - m]
    feasible = np.flatnonzero(reach[n])
    best_s = None
    best_score = math.inf
    for s in feasible:
        score = abs(float(s) - float(target_s))
        if score < best_score:
            best_score = score
            best_s = int(s)
    groups = []
    j, s = n, best_s
    while j > 0:
        for m in range(j, 0, -1):
            w = m * (m - 1)
            if s >= w and reach[j - m, s - w]:
                groups.append(m)
                j -= m
                s -= w
                break
    return groups


def gen_correlated_vectors(n: int, d: int, R_target: float, seed: int = 0):
    """n unit vectors whose pairwise-correlation measure is close to R_target.

    Clients are partitioned into groups; every client in a group holds the
    same canonical basis vector and distinct groups get orthogonal basis
    vectors, so the correlation measure is sum_g m_g(m_g - 1) / n. Returns
    (vectors, realized_R).
    """
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    if not -1e-12 <= R_target <= n - 1 + 1e-12:
        raise ParameterError(f"R_target must lie in [0, n-1] = [0, {n - 1}], got {R_target}")
    groups = _partition_for_target(n, n * float(R_target))
    if len(groups) > d:
        raise ParameterError(
            f"need d >= {len(groups)} distinct basis vectors for this target, got d={d}"
        )
    rng = np.random.default_rng(seed)
    axes = rng.choice(d, size=len(groups), replace=False)
    vectors = np.zeros((n, d))
    row = 0
    for size, axis in zip(groups, axes):
        vectors[row : row + size, axis] = 1.0
        row += size
    rng.shuffle(vectors, axis=0)
    realized = measure_correlation(vectors)
    return vectors, realized


# ---------------------------------------------------------------------------
# beta_bar resolution per scheme tag
# ---------------------------------------------------------------------------

def resolve_beta(
    scheme: str,
    n: int,
    d: int,
    k: int,
    R: float | None = None,
    beta_trials: int = 1000,
    beta_seed: int = 0,
) -> float:
    """The decoder normalizer for a scheme tag: exact where known, else calibrated.

    Exact values: d/k for rand_k and naive_rotation (the fixed rescaling both
    decoders apply), the binomial closed form for the rand_k_spatial family.
    The rps family is calibrated (cached). Wangni and induced use
    inverse-probability weights instead of a global scalar, reported as 1.
    """
    if scheme not in SCHEME_TAGS:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if scheme in ("rand_k", "naive_rotation"):
        return d / k
    if scheme in ("wangni", "induced"):
        return 1.0
    transform = transform_for_scheme(scheme, n, R)
    if scheme.startswith("rand_k_spatial"):
        return exact_beta_bar("rand_k", n, d, k, transform)
    exact = exact_beta_bar("srht", n, d, k, transform)
    if exact is not None:
        return exact
    return calibrate_beta_cached("srht", n, d, k, transform, trials=beta_trials, master_seed=beta_seed)


# ---------------------------------------------------------------------------
# MSE experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemeResult:
    scheme: str
    mse_mean: float
    mse_std: float
    trials: int
    beta_bar: float
    errors: np.ndarray  # per-trial squared errors, in trial order


@dataclass(frozen=True)
class MseReport:
    n: int
    d: int
    k: int
    correlation: object  # requested: float or "orthogonal"/"identical"
    realized_R: float
    mean_norm: float
    master_seed: int
    results: dict

    def paired_se(self, scheme_a: str, scheme_b: str) -> float:
        diff = self.results[scheme_a].errors - self.results[scheme_b].errors
        return float(diff.std(ddof=1) / math.sqrt(diff.size))

    def mse_ratio(self, scheme_a: str, scheme_b: str) -> float:
        return self.results[scheme_a].mse_mean / self.results[scheme_b].mse_mean


@dataclass(frozen=True)
class _TrialPlan:
    schemes: tuple
    vectors: np.ndarray
    n: int
    d: int
    k: int
    master_seed: int
    configs: dict


def _run_trial_block(plan: _TrialPlan, start: int, stop: int) -> dict:
    x_bar = plan.vectors.mean(axis=0)
    out = {scheme: np.empty(stop - start) for scheme in plan.schemes}
    for t in range(start, stop):
        seeds = [SketchSeed(plan.master_seed, i, t) for i in range(plan.n)]
        shared = SketchSeed(plan.master_seed, SHARED_CLIENT_INDEX, t)
        for scheme in plan.schemes:
            msgs = [
                encode_for_scheme(plan.vectors[i], scheme, seeds[i], plan.k, shared_seed=shared)
                for i in range(plan.n)
            ]
            est = decode_for_scheme(msgs, scheme, plan.configs[scheme])
            diff = est - x_bar
            out[scheme][t - start] = diff @ diff
    return out


def _chunk_ranges(trials: int, workers: int):
    chunks = max(1, min(trials, workers * 4))
    size = -(-trials // chunks)
    return [(lo, min(lo + size, trials)) for lo in range(0, trials, size)]


def _resolve_vectors(n, d, correlation, vectors, vector_seed):
    if vectors is not None:
        vectors = np.asarray(vectors, dtype=float)
        if vectors.shape != (n, d):
            raise ParameterError(f"vectors must have shape ({n}, {d}), got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ParameterError("vectors must be finite")
        return vectors, measure_correlation(vectors)
    if correlation == "orthogonal":
        target = 0.0
    elif correlation == "identical":
        target = float(n - 1)
    else:
        target = float(correlation)
    return gen_correlated_vectors(n, d, target, seed=vector_seed)


def run_mse_experiment(
    schemes,
    n: int,
    d: int,
    k: int,
    correlation="orthogonal",
    trials: int = 1000,
    master_seed: int = 0,
    beta_trials: int = 1000,
    workers: int = 1,
    vectors=None,
    vector_seed: int = 0,
) -> MseReport:
    """Paired Monte-Carlo MSE of several schemes on one fixed vector set.

    ``correlation`` is "orthogonal", "identical", or a numeric target for
    gen_correlated_vectors; pass ``vectors`` to override the construction.
    """
    if isinstance(schemes, str):
        schemes = (schemes,)
    schemes = tuple(schemes)
    for scheme in schemes:
        if scheme not in SCHEME_TAGS:
            raise ParameterError(f"unknown scheme {scheme!r}")
    if trials < 1:
        raise ParameterError(f"need trials >= 1, got {trials}")
    custom_vectors = vectors is not None
    vectors, realized_R = _resolve_vectors(n, d, correlation, vectors, vector_seed)
    beta_seed = master_seed + _CALIBRATION_SEED_OFFSET
    betas = {
        scheme: resolve_beta(scheme, n, d, k, R=realized_R, beta_trials=beta_trials, beta_seed=beta_seed)
        for scheme in schemes
    }
    configs = {
        scheme: DecoderConfig(
            n=n,
            d=d,
            k=k,
            transform=transform_for_scheme(scheme, n, realized_R),
            beta_bar=betas[scheme],
        )
        for scheme in schemes
    }
    plan = _TrialPlan(
        schemes=schemes, vectors=vectors, n=n, d=d, k=k, master_seed=master_seed, configs=configs
    )
    ranges = _chunk_ranges(trials, workers)
    if workers > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_trial_block, [plan] * len(ranges), *zip(*ranges)))
    else:
        blocks = [_run_trial_block(plan, lo, hi) for lo, hi in ranges]
    results = {}
    for scheme in schemes:
        errors = np.concatenate([block[scheme] for block in blocks])
        results[scheme] = SchemeResult(
            scheme=scheme,
            mse_mean=float(errors.mean()),
            mse_std=float(errors.std(ddof=1)) if trials > 1 else 0.0,
            trials=trials,
            beta_bar=betas[scheme],
            errors=errors,
        )
    x_bar = vectors.mean(axis=0)
    return MseReport(
        n=n,
        d=d,
        k=k,
        correlation="custom" if custom_vectors else correlation,
        realized_R=realized_R,
        mean_norm=float(np.linalg.norm(x_bar)),
        master_seed=master_seed,
        results=results,
    )


# ---------------------------------------------------------------------------
# rank-of-S statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankReport:
    n: int
    d: int
    k: int
    trials: int
    counts: dict  # rank -> occurrences
    full_rank: int  # min(n*k, d)
    delta: float  # P(rank < full_rank)

    @property
    def rank_fractions(self) -> dict:
        return {rank: count / self.trials for rank, count in sorted(self.counts.items())}


def _rank_block(n, d, k, master_seed, rank_tol, start, stop) -> np.ndarray:
    out = np.empty(stop - start, dtype=np.int64)
    for t in range(start, stop):
        seeds = [SketchSeed(master_seed, i, t) for i in range(n)]
        S = accumulate_gram(seeds, d, k)
        lam = np.linalg.eigvalsh(S)
        top = lam[-1]
        out[t - start] = int(np.count_nonzero(lam > rank_tol * max(top, 0.0)))
    return out


def run_rank_experiment(
    n: int,
    d: int,
    k: int,
    trials: int,
    master_seed: int = 0,
    rank_tol: float | None = None,
    workers: int = 1,
) -> RankReport:
    """Histogram of rank(S) over fresh sketch draws; delta = P(rank deficient)."""
    if trials < 1:
        raise ParameterError(f"need trials >= 1, got {trials}")
    tol = default_rank_tol(d) if rank_tol is None else rank_tol
    ranges = _chunk_ranges(trials, workers)
    args = [(n, d, k, master_seed, tol, lo, hi) for lo, hi in ranges]
    if workers > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_rank_block, *zip(*args)))
    else:
        blocks = [_rank_block(*a) for a in args]
    ranks = np.concatenate(blocks)
    values, counts = np.unique(ranks, return_counts=True)
    full = min(n * k, d)
    delta = float(np.count_nonzero(ranks < full) / trials)
    return RankReport(
        n=n,
        d=d,
        k=k,
        trials=trials,
        counts={int(v): int(c) for v, c in zip(values, counts)},
        full_rank=full,
        delta=delta,
    )


# ---------------------------------------------------------------------------
# oversampled-regime limit
# ---------------------------------------------------------------------------

def run_limit_experiment(
    n: int,
    d: int,
    k: int,
    trials: int,
    master_seed: int = 0,
    workers: int = 1,
) -> MseReport:
    """Rand-k-Spatial(Max) vs Rand-k on orthogonal vectors when nk >= 4d.

    In this oversampled regime the spatial decoder's advantage vanishes;
    use MseReport.mse_ratio("rand_k_spatial_max", "rand_k") for the ratio.
    """
    if n * k < 4 * d:
        raise ParameterError(f"limit experiment expects nk >= 4d, got nk={n * k}, d={d}")
    return run_mse_experiment(
        ("rand_k_spatial_max", "rand_k"),
        n=n,
        d=d,
        k=k,
        correlation="orthogonal",
        trials=trials,
        master_seed=master_seed,
        workers=workers,
    )


# ---------------------------------------------------------------------------
# CSV serialization (column orders are frozen; see README)
# ---------------------------------------------------------------------------

MSE_CSV_COLUMNS = ("scheme", "n", "d", "k", "R", "mse_mean", "mse_std", "trials", "realized_R", "beta_bar")
RANK_CSV_COLUMNS = ("n", "d", "k", "trials", "rank", "count", "fraction")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_mse_csv(report: MseReport, path):
    lines = [",".join(MSE_CSV_COLUMNS)]
    for scheme in report.results:
        res = report.results[scheme]
        row = (
            scheme,
            report.n,
            report.d,
            report.k,
            report.correlation,
            res.mse_mean,
            res.mse_std,
            res.trials,
            report.realized_R,
            res.beta_bar,
        )
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_rank_csv(report: RankReport, path):
    lines = [",".join(RANK_CSV_COLUMNS)]
    for rank in sorted(report.counts):
        count = report.counts[rank]
        row = (report.n, report.d, report.k, report.trials, rank, count, count / report.trials)
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
