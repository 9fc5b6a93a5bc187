"""Monte-Carlo estimation of the unbiasedness constant beta_bar.

``beta_bar`` is the scalar that makes a decoder's per-client map unbiased:
with all n clients holding the same unit probe u, the decoded mean run with
beta_bar = 1 has expectation c*u for a data-independent constant c, and
beta_bar = 1/c. The probe set is the first min(d, 8) canonical basis vectors
plus one seeded random unit vector; the spread of the per-probe ratios
(``probe_residual``) quantifies how far the mean map is from an exact scalar
multiple of the identity.

Three pipelines can be calibrated:

- ``rand_k``       coordinate subsampling decoded per-coordinate,
- ``rand_k_eigen`` the same messages decoded through the eigen-space pipeline,
- ``srht``         sketched messages decoded through the eigen-space pipeline.

For pipelines with closed-form constants (``exact_beta_bar``) calibration is
only a cross-check; the harness prefers the exact values.
"""

from __future__ import annotations

import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ParameterError
from .estimators import DecoderConfig, randk_encode, randk_spatial_decode
from .linalg import SketchSeed, eigh, sketch_row_block, transformed_pinv
from .transforms import Transform

__all__ = [
    "CalibrationResult",
    "CalibrationWarning",
    "PIPELINES",
    "calibrate_beta",
    "calibrate_beta_cached",
    "exact_beta_bar",
    "cache_path",
    "read_cache",
]

PIPELINES = ("rand_k", "rand_k_eigen", "srht")

# residual above which the scalar-multiple-of-identity assumption is suspect
_RESIDUAL_WARN = 0.05


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CalibrationResult:
    scheme: str
    n: int
    d: int
    k: int
    transform: Transform
    beta_bar: float
    trials: int
    probe_residual: float


def _probe_matrix(d: int, master_seed: int) -> np.ndarray:
    """Columns are the probes: min(d, 8) basis vectors + one random unit."""
    b = min(d, 8)
    probes = np.zeros((d, b + 1))
    probes[:b, :b] = np.eye(b)
    rng = np.random.default_rng((master_seed, 0xCA11B))
    u = rng.normal(size=d)
    probes[:, b] = u / np.linalg.norm(u)
    return probes


def calibrate_beta(
    scheme: str,
    n: int,
    d: int,
    k: int,
    transform: Transform,
    trials: int = 1000,
    master_seed: int = 0,
    rank_tol: float | None = None,
) -> CalibrationResult:
    """Estimate beta_bar for a pipeline by running it with beta_bar = 1.

    Every trial draws fresh client sketches, feeds n identical copies of each
    probe through the full encode -> decode path, and accumulates
    <u, decode(u)>. All probes share each trial's draws (the decode map of a
    trial is linear, so one decomposition serves every probe).
    """
    if scheme not in PIPELINES:
        raise ParameterError(f"unknown calibration pipeline {scheme!r}; expected one of {PIPELINES}")
    if trials < 100:
        raise ParameterError(f"need at least 100 trials, got {trials}")
    probes = _probe_matrix(d, master_seed)
    n_probes = probes.shape[1]
    basis_count = n_probes - 1
    config = DecoderConfig(n=n, d=d, k=k, transform=transform, beta_bar=1.0, rank_tol=rank_tol)
    acc = np.zeros(n_probes)

    if scheme in ("rand_k", "rand_k_eigen"):
        # Both decoders act diagonally on identical-copy inputs, so decoding
        # the all-ones vector once per trial recovers the whole diagonal.
        ones = np.ones(d)
        from .estimators import rps_decode_with_subsampling

        decode = randk_spatial_decode if scheme == "rand_k" else rps_decode_with_subsampling
        for t in range(trials):
            msgs = [randk_encode(ones, SketchSeed(master_seed, i, t), k) for i in range(n)]
            diag = decode(msgs, config)
            acc[:basis_count] += diag[:basis_count]
            acc[basis_count] += probes[:, basis_count] ** 2 @ diag
    else:
        for t in range(trials):
            stacked = np.concatenate(
                [sketch_row_block(SketchSeed(master_seed, i, t), d, k) for i in range(n)],
                axis=0,
            )
            S = stacked.T @ stacked
            P = transformed_pinv(eigh(S), transform, rank_tol)
            # decode of probe u with beta_bar = 1 is (1/n) * P @ (S @ u)
            est = P @ (S @ probes) / n
            acc += np.einsum("dp,dp->p", probes, est)

    mean_inner = acc / trials
    if np.any(mean_inner <= 0):
        raise CalibrationError(
            "probe mean fell on the wrong side of zero; increase trials or "
            f"check the transform (inner products: {mean_inner})"
        )
    ratios = 1.0 / mean_inner  # probes are unit vectors, so <u, u> = 1
    beta_bar = float(ratios.mean())
    probe_residual = float(np.max(np.abs(ratios - beta_bar)) / beta_bar)
    if probe_residual > _RESIDUAL_WARN:
        warnings.warn(
            f"probe ratios spread by {probe_residual:.1%}; the mean decode map "
            "deviates from a scalar multiple of the identity",
            CalibrationWarning,
            stacklevel=2,
        )
    return CalibrationResult(
        scheme=scheme,
        n=n,
        d=d,
        k=k,
        transform=transform,
        beta_bar=beta_bar,
        trials=trials,
        probe_residual=probe_residual,
    )


def exact_beta_bar(scheme: str, n: int, d: int, k: int, transform: Transform) -> float | None:
    """Closed-form beta_bar where one exists, else None.

    For coordinate subsampling: conditioned on a client sending coordinate j,
    the hit count is 1 + B with B ~ Binomial(n-1, k/d), so unbiasedness needs
    beta_bar = (d/k) / E[1 / T(1 + B)].

    For the sketched pipeline with the constant-one transform the decoder's
    per-client map has expectation (k/d) * I, so beta_bar = d/k exactly.
    """
    if scheme not in PIPELINES:
        raise ParameterError(f"unknown calibration pipeline {scheme!r}")
    if scheme in ("rand_k", "rand_k_eigen"):
        p = k / d
        expect = sum(
            math.comb(n - 1, b) * p**b * (1 - p) ** (n - 1 - b) / transform(1.0 + b)
            for b in range(n)
        )
        return (d / k) / expect
    if transform.kind == "one" or (transform.kind == "opt" and transform.R == 0.0):
        # opt at R = 0 is identically the constant-one transform
        return d / k
    return None


# ---------------------------------------------------------------------------
# cache file: one tab-separated line per calibration
# ---------------------------------------------------------------------------

_CACHE_FIELDS = ("scheme", "n", "d", "k", "transform", "R", "master_seed", "trials", "beta_bar")


def cache_path() -> Path:
    base = os.environ.get("DME_CACHE_DIR")
    root = Path(base).expanduser() if base else Path("~/.cache/sketchmean").expanduser()
    return root / "beta_cache.tsv"


def _cache_key(scheme, n, d, k, transform: Transform, master_seed, trials):
    r_field = "" if transform.R is None else repr(float(transform.R))
    return (scheme, str(n), str(d), str(k), transform.kind, r_field, str(master_seed), str(trials))


def read_cache(path: Path | None = None) -> dict:
    path = cache_path() if path is None else path
    entries = {}
    if not path.exists():
        return entries
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(_CACHE_FIELDS):
            continue
        entries[tuple(parts[:-1])] = float(parts[-1])
    return entries


def _write_cache(entries: dict, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(key + (repr(value),)) for key, value in sorted(entries.items())]
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".beta_cache_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def calibrate_beta_cached(
    scheme: str,
    n: int,
    d: int,
    k: int,
    transform: Transform,
    trials: int = 1000,
    master_seed: int = 0,
    rank_tol: float | None = None,
) -> float:
    """calibrate_beta with a plain-text cache keyed on all parameters."""
    key = _cache_key(scheme, n, d, k, transform, master_seed, trials)
    path = cache_path()
    entries = read_cache(path)
    if key in entries:
        return entries[key]
    result = calibrate_beta(
        scheme, n, d, k, transform, trials=trials, master_seed=master_seed, rank_tol=rank_tol
    )
    entries = read_cache(path)  # re-read in case another process added entries
    entries[key] = result.beta_bar
    _write_cache(entries, path)
    return result.beta_bar
