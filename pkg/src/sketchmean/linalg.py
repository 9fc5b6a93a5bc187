"""Seeded randomized linear algebra kernels.

Everything here is a pure, deterministic function of its inputs. The random
sketches are derived from a counter-based generator keyed on
(master_seed, client_index, round_index), so any worker can re-derive any
client's matrices bit-identically, in any order.

Conventions fixed here and relied on everywhere else:

- Hadamard matrices use Sylvester (natural) ordering,
  H[i, j] = (-1)^popcount(i AND j), unnormalized (entries are +/-1).
- A sketch is G = (1/sqrt(d)) * E * H * D, where D is a Rademacher diagonal
  and E selects k distinct rows (sampled without replacement). Every row of G
  has unit squared norm.
- For a given seed, the row subsample is drawn before the sign diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateTransformError, DimensionError, NumericalError, ParameterError

__all__ = [
    "SketchSeed",
    "SHARED_CLIENT_INDEX",
    "fwht",
    "derive_sketch",
    "srht_encode",
    "sketch_row_block",
    "hadamard_rows",
    "accumulate_gram",
    "EigenDecomposition",
    "eigh",
    "transformed_pinv",
    "default_rank_tol",
]

# Client index reserved for a rotation shared by all clients (same-rotation
# preprocessing baseline). Ordinary client indices must stay below this.
SHARED_CLIENT_INDEX = 2**32 - 1


@dataclass(frozen=True)
class SketchSeed:
    """Identifies one client's random sketch in one round.

    The triple fully determines the subsample rows and the sign diagonal;
    re-deriving them yields bit-identical results.
    """

    master_seed: int
    client_index: int = 0
    round_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ParameterError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not (0 <= self.client_index <= SHARED_CLIENT_INDEX):
            raise ParameterError(f"client_index out of range: {self.client_index}")
        if not (0 <= self.round_index < 2**32):
            raise ParameterError(f"round_index out of range: {self.round_index}")

    def generator(self) -> np.random.Generator:
        """Counter-based generator for this (master, client, round) triple."""
        key = np.array(
            [self.master_seed, (self.client_index << 32) | self.round_index],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


def _is_pow2(d: int) -> bool:
    return d >= 1 and (d & (d - 1)) == 0


def fwht(x, inplace=False):
    """Walsh-Hadamard transform H @ x along the last axis, in O(d log d).

    H is the unnormalized Sylvester-ordered Hadamard matrix, so applying the
    transform twice multiplies the input by d. Accepts batched input: the
    transform is applied to the last axis. The input is left untouched unless
    ``inplace=True``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    if not _is_pow2(d):
        raise DimensionError(f"transform length must be a power of 2, got {d}")
    if inplace:
        # the butterfly mutates through reshaped views, which only works on
        # a writeable C-contiguous buffer
        if not (x.flags.c_contiguous and x.flags.writeable):
            raise ParameterError("in-place transform needs a writeable C-contiguous float64 array")
    else:
        x = x.copy()
    h = 1
    while h < d:
        y = x.reshape(x.shape[:-1] + (d // (2 * h), 2, h))
        a = y[..., 0, :].copy()
        y[..., 0, :] += y[..., 1, :]
        y[..., 1, :] = a - y[..., 1, :]
        h *= 2
    return x


def _subsample_without_replacement(rng: np.random.Generator, d: int, k: int) -> np.ndarray:
    """k distinct indices from [0, d) by partial Fisher-Yates (O(k) memory)."""
    draws = rng.integers(np.arange(k), d)  # draws[t] is uniform on [t, d)
    swap: dict[int, int] = {}
    out = np.empty(k, dtype=np.int64)
    for t in range(k):
        j = int(draws[t])
        out[t] = swap.get(j, j)
        swap[j] = swap.get(t, t)
    return out


@lru_cache(maxsize=4096)
def _derive_sketch_cached(master_seed, client_index, round_index, d, k):
    rng = SketchSeed(master_seed, client_index, round_index).generator()
    rows = _subsample_without_replacement(rng, d, k)
    signs = (rng.integers(0, 2, size=d) * 2 - 1).astype(np.float64)
    rows.setflags(write=False)
    signs.setflags(write=False)
    return rows, signs


def derive_sketch(seed: SketchSeed, d: int, k: int):
    """Derive (subsample_rows, signs) for a client's sketch.

    Returns k distinct row indices in [0, d) and a length-d array of +/-1
    signs. Deterministic in ``seed``; the subsample is drawn before the signs.
    """
    if not _is_pow2(d):
        raise DimensionError(f"d must be a power of 2, got {d}")
    if not (1 <= k <= d):
        raise ParameterError(f"need 1 <= k <= d, got k={k}, d={d}")
    return _derive_sketch_cached(
        seed.master_seed, seed.client_index, seed.round_index, int(d), int(k)
    )


def srht_encode(x, seed: SketchSeed, k: int) -> np.ndarray:
    """Encode x as G @ x where G = (1/sqrt(d)) * E * H * D.

    Computed as sign flip, fast transform, 1/sqrt(d) scaling, then gathering
    the k subsampled rows; O(d log d).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {x.shape}")
    d = x.shape[0]
    rows, signs = derive_sketch(seed, d, k)
    y = fwht(x * signs) / np.sqrt(d)
    return y[rows]


def hadamard_rows(indices, d: int) -> np.ndarray:
    """Rows of the d x d Sylvester Hadamard matrix, as +/-1 floats.

    H[i, j] = (-1)^popcount(i AND j); computed by a vectorized parity fold
    so no d x d matrix is ever materialized.
    """
    if not _is_pow2(d):
        raise DimensionError(f"d must be a power of 2, got {d}")
    idx = np.asarray(indices, dtype=np.int64)
    v = idx[:, None] & np.arange(d, dtype=np.int64)[None, :]
    # parity of popcount, folded over the 32 bits that a power-of-2 index uses
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return 1.0 - 2.0 * (v & 1)


def sketch_row_block(seed: SketchSeed, d: int, k: int) -> np.ndarray:
    """The dense k x d row block of G for one client.

    Row r equals (1/sqrt(d)) * H[rows[r], :] * signs; used by the server to
    rebuild G from the seed alone (clients never ship matrices).
    """
    rows, signs = derive_sketch(seed, d, k)
    return hadamard_rows(rows, d) * (signs / np.sqrt(d))[None, :]


def accumulate_gram(seeds, d: int, k: int) -> np.ndarray:
    """S = sum_i G_i^T G_i for the given client seeds.

    Built from the n*k sketch rows reconstructed seed-by-seed; each SRHT row
    has unit squared norm, so trace(S) = n*k. Cost O(n*k*d^2).
    """
    blocks = [sketch_row_block(s, d, k) for s in seeds]
    stacked = np.concatenate(blocks, axis=0)
    return stacked.T @ stacked


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral factorization S = U diag(eigenvalues) U^T.

    Eigenvalues are in descending order; eigenvectors are the matching
    columns of U.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eigh(S) -> EigenDecomposition:
    """Full symmetric eigendecomposition with descending eigenvalues."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise NumericalError("matrix contains non-finite entries")
    # guard against asymmetry from accumulated round-off
    S = 0.5 * (S + S.T)
    try:
        w, U = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed to converge: {exc}") from exc
    return EigenDecomposition(eigenvalues=w[::-1].copy(), eigenvectors=U[:, ::-1].copy())


def default_rank_tol(d: int) -> float:
    """Standard numerical-rank cutoff, relative to the largest eigenvalue."""
    return d * np.finfo(np.float64).eps


def transformed_pinv(E: EigenDecomposition, transform, rank_tol=None) -> np.ndarray:
    """(T(S))^dagger from the eigendecomposition of S.

    Eigenvalues at or below rank_tol * lambda_max are treated as exactly zero
    BEFORE the transform is applied: the transform only ever sees the retained
    (numerically nonzero) eigenvalues, and zeroed eigenvalues contribute zero
    to the pseudoinverse. Raises DegenerateTransformError if the transform
    maps a retained eigenvalue to a non-positive value.
    """
    lam = np.asarray(E.eigenvalues, dtype=np.float64)
    d = lam.shape[0]
    if rank_tol is None:
        rank_tol = default_rank_tol(d)
    if rank_tol < 0:
        raise ParameterError(f"rank_tol must be >= 0, got {rank_tol}")
    lam_max = lam[0] if lam.size else 0.0
    keep = lam > rank_tol * max(lam_max, 0.0)
    inv = np.zeros(d)
    if np.any(keep):
        tvals = np.asarray(transform(lam[keep]), dtype=np.float64)
        if np.any(tvals <= 0.0):
            bad = lam[keep][tvals <= 0.0][0]
            raise DegenerateTransformError(
                f"transform is non-positive at retained eigenvalue {bad!r}"
            )
        inv[keep] = 1.0 / tvals
    U = E.eigenvectors
    P = (U * inv) @ U.T
    return 0.5 * (P + P.T)
