"""Encoder/decoder pairs for all compression schemes.

Encoding families and the scheme tags that decode them:

====================  =============================================
message family        scheme tags
====================  =============================================
rand_k                rand_k, rand_k_spatial_max/avg/opt
srht                  rps_max, rps_avg, rps_opt
wangni                wangni
induced               induced
naive_rotation        naive_rotation
====================  =============================================

Every decoder returns an estimate of the MEAN of the client vectors (the 1/n
averaging happens inside the decoder). ``beta_bar`` is therefore the
per-client normalizer: the constant that makes one client's decode map
unbiased for that client's vector (d/k for plain coordinate subsampling).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateTransformError,
    DimensionError,
    ParameterError,
    ProtocolError,
)
from .linalg import (
    SketchSeed,
    derive_sketch,
    eigh,
    fwht,
    sketch_row_block,
    srht_encode,
    transformed_pinv,
    _subsample_without_replacement,
)
from .transforms import Transform

__all__ = [
    "SCHEME_TAGS",
    "EncodedMessage",
    "DecoderConfig",
    "BudgetWarning",
    "derive_subsample",
    "transform_for_scheme",
    "encode_for_scheme",
    "decode_for_scheme",
    "randk_encode",
    "randk_decode",
    "randk_spatial_decode",
    "srht_family_encode",
    "rps_decode",
    "rps_decode_with_subsampling",
    "wangni_encode",
    "wangni_decode",
    "induced_encode",
    "induced_decode",
    "naive_rotation_encode",
    "naive_rotation_decode",
]

SCHEME_TAGS = (
    "rand_k",
    "rand_k_spatial_max",
    "rand_k_spatial_avg",
    "rand_k_spatial_opt",
    "rps_max",
    "rps_avg",
    "rps_opt",
    "wangni",
    "induced",
    "naive_rotation",
)

# scheme tag -> message family expected by its decoder
_FAMILY = {
    "rand_k": "rand_k",
    "rand_k_spatial_max": "rand_k",
    "rand_k_spatial_avg": "rand_k",
    "rand_k_spatial_opt": "rand_k",
    "rps_max": "srht",
    "rps_avg": "srht",
    "rps_opt": "srht",
    "wangni": "wangni",
    "induced": "induced",
    "naive_rotation": "naive_rotation",
}


class BudgetWarning(UserWarning):
    """Issued when n*k exceeds d (outside the communication-constrained regime)."""


@dataclass(frozen=True)
class EncodedMessage:
    """One client's compressed message: a payload plus the seed that grew it."""

    family: str
    payload: np.ndarray
    seed: SketchSeed
    d: int
    k: int
    aux: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DecoderConfig:
    """Server-side decoding parameters shared by all n messages of a round."""

    n: int
    d: int
    k: int
    transform: Transform | None = None
    beta_bar: float = 1.0
    rank_tol: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or not (1 <= self.k <= self.d):
            raise ParameterError(f"bad sizes n={self.n}, d={self.d}, k={self.k}")
        if not (np.isfinite(self.beta_bar) and self.beta_bar > 0):
            raise ParameterError(f"beta_bar must be finite and positive, got {self.beta_bar}")
        if self.n * self.k > self.d:
            warnings.warn(
                f"n*k = {self.n * self.k} exceeds d = {self.d}; estimators are "
                "meant for the communication-constrained regime n*k <= d",
                BudgetWarning,
                stacklevel=2,
            )


def transform_for_scheme(scheme: str, n: int, R: float | None = None) -> Transform | None:
    """The transform a scheme tag implies (None for schemes that take none)."""
    if scheme.endswith("_max"):
        return Transform("identity")
    if scheme.endswith("_avg"):
        return Transform("avg", n=n)
    if scheme.endswith("_opt"):
        if R is None:
            raise ParameterError(f"scheme {scheme!r} needs the correlation R")
        return Transform("opt", n=n, R=R)
    return None


@lru_cache(maxsize=4096)
def _derive_subsample_cached(master_seed, client_index, round_index, d, k):
    rng = SketchSeed(master_seed, client_index, round_index).generator()
    idx = _subsample_without_replacement(rng, d, k)
    idx.setflags(write=False)
    return idx


def derive_subsample(seed: SketchSeed, d: int, k: int) -> np.ndarray:
    """k distinct coordinate indices in [0, d), deterministic in the seed.

    Consumes the seeded stream exactly like the sketch derivation does, so for
    power-of-2 d this equals the row set of ``derive_sketch(seed, d, k)``.
    Unlike the sketch, d may be any positive integer.
    """
    if not (1 <= k <= d):
        raise ParameterError(f"need 1 <= k <= d, got k={k}, d={d}")
    return _derive_subsample_cached(
        seed.master_seed, seed.client_index, seed.round_index, int(d), int(k)
    )


@lru_cache(maxsize=64)
def _rotation_signs(master_seed, client_index, round_index, d):
    rng = SketchSeed(master_seed, client_index, round_index).generator()
    signs = (rng.integers(0, 2, size=d) * 2 - 1).astype(np.float64)
    signs.setflags(write=False)
    return signs


def _check_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("vector contains non-finite entries")
    return x


def _check_messages(messages, family: str, config: DecoderConfig):
    if len(messages) != config.n:
        raise ProtocolError(f"expected {config.n} messages, got {len(messages)}")
    for m in messages:
        if m.family != family:
            raise ProtocolError(f"decoder for {family!r} received a {m.family!r} message")
        if m.d != config.d:
            raise ProtocolError(f"message has d={m.d}, decoder expects d={config.d}")


# ---------------------------------------------------------------------------
# coordinate subsampling (rand_k family)
# ---------------------------------------------------------------------------


def randk_encode(x, seed: SketchSeed, k: int) -> EncodedMessage:
    """Send x at k seed-derived coordinates (sampled without replacement)."""
    x = _check_vector(x)
    d = x.shape[0]
    idx = derive_subsample(seed, d, k)
    return EncodedMessage(family="rand_k", payload=x[idx], seed=seed, d=d, k=k)


def randk_decode(messages, config: DecoderConfig) -> np.ndarray:
    """Mean estimate: scatter payloads, scale by d/k, average over clients."""
    _check_messages(messages, "rand_k", config)
    d, k = config.d, config.k
    out = np.zeros(d)
    for m in messages:
        idx = derive_subsample(m.seed, d, k)
        out[idx] += m.payload
    out *= d / (k * config.n)
    return out


def randk_spatial_decode(messages, config: DecoderConfig) -> np.ndarray:
    """Correlation-aware decode: coordinate j is scaled by beta_bar / T(M_j).

    M_j is the number of clients whose subsample contained coordinate j;
    coordinates nobody sent decode to zero.
    """
    _check_messages(messages, "rand_k", config)
    if config.transform is None:
        raise ParameterError("spatial decoding needs a transform")
    d, k = config.d, config.k
    sums = np.zeros(d)
    counts = np.zeros(d)
    for m in messages:
        idx = derive_subsample(m.seed, d, k)
        sums[idx] += m.payload
        counts[idx] += 1.0
    got = counts > 0
    out = np.zeros(d)
    if np.any(got):
        tvals = np.asarray(config.transform(counts[got]), dtype=np.float64)
        if np.any(tvals <= 0.0):
            bad = counts[got][tvals <= 0.0][0]
            raise DegenerateTransformError(
                f"transform non-positive at hit count {int(bad)}"
            )
        out[got] = sums[got] / tvals
    out *= config.beta_bar / config.n
    return out


# ---------------------------------------------------------------------------
# random-projection sketching (srht family)
# ---------------------------------------------------------------------------


def srht_family_encode(x, seed: SketchSeed, k: int) -> EncodedMessage:
    """Send G @ x for the seed's k x d sketch G = (1/sqrt(d)) E H D."""
    x = _check_vector(x)
    return EncodedMessage(
        family="srht", payload=srht_encode(x, seed, k), seed=seed, d=x.shape[0], k=k
    )


def _eigen_space_decode(stacked_rows, payloads, config: DecoderConfig) -> np.ndarray:
    """Shared server pipeline: v = sum_i G_i^T payload_i, S = sum_i G_i^T G_i,
    then beta_bar/n * (T(S))^dagger @ v."""
    if config.transform is None:
        raise ParameterError("eigen-space decoding needs a transform")
    S = stacked_rows.T @ stacked_rows
    v = stacked_rows.T @ payloads
    P = transformed_pinv(eigh(S), config.transform, config.rank_tol)
    return (config.beta_bar / config.n) * (P @ v)


def rps_decode(messages, config: DecoderConfig) -> np.ndarray:
    """Decode sketched messages through the transformed-eigenvalue pipeline.

    The server rebuilds each client's sketch rows from the seed, so
    G_i^T G_i x_i = G_i^T payload_i never needs the client vector.
    """
    _check_messages(messages, "srht", config)
    d, k = config.d, config.k
    stacked = np.concatenate([sketch_row_block(m.seed, d, k) for m in messages], axis=0)
    payloads = np.concatenate([m.payload for m in messages])
    return _eigen_space_decode(stacked, payloads, config)


def rps_decode_with_subsampling(messages, config: DecoderConfig) -> np.ndarray:
    """The same eigen-space pipeline run on plain subsampling messages.

    Each sketch is the 0/1 coordinate-selection matrix derived from the
    message seed. Output agrees with ``randk_spatial_decode`` on the same
    draws coordinate-for-coordinate (the accumulated matrix is diagonal with
    the hit counts on its diagonal).
    """
    _check_messages(messages, "rand_k", config)
    d, k = config.d, config.k
    blocks = np.zeros((config.n * k, d))
    payloads = np.concatenate([m.payload for m in messages])
    for i, m in enumerate(messages):
        idx = derive_subsample(m.seed, d, k)
        blocks[np.arange(i * k, (i + 1) * k), idx] = 1.0
    return _eigen_space_decode(blocks, payloads, config)


# ---------------------------------------------------------------------------
# adaptive magnitude-proportional sampling
# ---------------------------------------------------------------------------


def _magnitude_probabilities(mag: np.ndarray, k: int) -> np.ndarray:
    """Per-coordinate inclusion probabilities p with sum(p) = k.

    p is proportional to |x_j|, truncated at 1 and iteratively rescaled:
    saturated coordinates keep p = 1 while the rest are rescaled so the total
    budget is met. Stops when sum(p) is within 1e-9 of k, after 100 rounds,
    or when every nonzero coordinate has saturated.
    """
    d = mag.shape[0]
    p = np.zeros(d)
    saturated = np.zeros(d, dtype=bool)
    for _ in range(100):
        budget = k - saturated.sum()
        free = ~saturated & (mag > 0)
        if budget <= 0 or not np.any(free):
            break
        scale = budget / mag[free].sum()
        trial = mag * scale
        newly = free & (trial >= 1.0)
        if not np.any(newly):
            p[free] = trial[free]
            break
        saturated |= newly
    else:
        # iteration cap (only reachable for k > 100): keep the last rescaling,
        # clipped at 1, so every nonzero coordinate stays reachable
        free = ~saturated & (mag > 0)
        budget = k - saturated.sum()
        if budget > 0 and np.any(free):
            p[free] = np.minimum(mag[free] * (budget / mag[free].sum()), 1.0)
    p[saturated] = 1.0
    return p


def wangni_encode(x, seed: SketchSeed, k: int) -> EncodedMessage:
    """Magnitude-proportional coordinate sampling with importance weights.

    Each coordinate j is kept independently with probability p_j
    (sum p_j = k); kept values are sent as x_j / p_j so the scatter of one
    message is already unbiased for x. A zero vector emits an empty payload
    flagged in aux.
    """
    x = _check_vector(x)
    d = x.shape[0]
    if not (1 <= k <= d):
        raise ParameterError(f"need 1 <= k <= d, got k={k}, d={d}")
    mag = np.abs(x)
    if mag.sum() == 0.0:
        empty = np.empty(0)
        return EncodedMessage(
            family="wangni", payload=empty, seed=seed, d=d, k=k,
            aux={"indices": np.empty(0, dtype=np.int64), "probs": empty, "zero": True},
        )
    p = _magnitude_probabilities(mag, k)
    rng = seed.generator()
    u = rng.random(d)
    sel = np.flatnonzero(u < p)
    return EncodedMessage(
        family="wangni",
        payload=x[sel] / p[sel],
        seed=seed,
        d=d,
        k=k,
        aux={"indices": sel, "probs": p[sel]},
    )


def wangni_decode(messages, config: DecoderConfig) -> np.ndarray:
    """Average the per-client unbiased scatters."""
    _check_messages(messages, "wangni", config)
    out = np.zeros(config.d)
    for m in messages:
        out[m.aux["indices"]] += m.payload
    out /= config.n
    return out


# ---------------------------------------------------------------------------
# top-magnitude + residual-subsampling combination
# ---------------------------------------------------------------------------


def induced_encode(x, seed: SketchSeed, k_top: int, k_rand: int) -> EncodedMessage:
    """Largest-magnitude coordinates verbatim, plus an unbiased subsample of
    the residual.

    Ties in magnitude are broken toward the lower index. The decoded client
    value (top part + d/k_rand-scaled residual scatter) is unbiased for x.
    """
    x = _check_vector(x)
    d = x.shape[0]
    if k_top < 1 or k_rand < 1:
        raise ParameterError("k_top and k_rand must both be >= 1")
    if k_top + k_rand > d:
        raise ParameterError(f"budget k_top + k_rand = {k_top + k_rand} exceeds d = {d}")
    # stable sort on descending magnitude: equal magnitudes keep index order
    top_idx = np.argsort(-np.abs(x), kind="stable")[:k_top]
    residual = x.copy()
    residual[top_idx] = 0.0
    rand_idx = derive_subsample(seed, d, k_rand)
    payload = np.concatenate([x[top_idx], residual[rand_idx]])
    return EncodedMessage(
        family="induced",
        payload=payload,
        seed=seed,
        d=d,
        k=k_top + k_rand,
        aux={"top_indices": top_idx, "k_top": k_top, "k_rand": k_rand},
    )


def induced_decode(messages, config: DecoderConfig) -> np.ndarray:
    """Average of per-client (top part + unbiased residual estimate)."""
    _check_messages(messages, "induced", config)
    d = config.d
    out = np.zeros(d)
    for m in messages:
        k_top = m.aux["k_top"]
        k_rand = m.aux["k_rand"]
        out[m.aux["top_indices"]] += m.payload[:k_top]
        rand_idx = derive_subsample(m.seed, d, k_rand)
        out[rand_idx] += (d / k_rand) * m.payload[k_top:]
    out /= config.n
    return out


# ---------------------------------------------------------------------------
# shared-rotation preprocessing (no-gain baseline)
# ---------------------------------------------------------------------------


def naive_rotation_encode(x, seed: SketchSeed, k: int, shared_seed: SketchSeed) -> EncodedMessage:
    """Rotate by the rotation every client shares, then subsample k coordinates.

    The rotation is (1/sqrt(d)) H D with D drawn from ``shared_seed``; the
    per-client randomness is only the coordinate subsample.
    """
    x = _check_vector(x)
    d = x.shape[0]
    signs = _rotation_signs(
        shared_seed.master_seed, shared_seed.client_index, shared_seed.round_index, d
    )
    y = fwht(x * signs) / np.sqrt(d)
    idx = derive_subsample(seed, d, k)
    return EncodedMessage(
        family="naive_rotation",
        payload=y[idx],
        seed=seed,
        d=d,
        k=k,
        aux={"shared_seed": shared_seed},
    )


def naive_rotation_decode(messages, config: DecoderConfig) -> np.ndarray:
    """Invert the shared rotation around a plain subsampling decode."""
    _check_messages(messages, "naive_rotation", config)
    d, k = config.d, config.k
    shared = messages[0].aux["shared_seed"]
    if any(m.aux["shared_seed"] != shared for m in messages):
        raise ProtocolError("messages disagree on the shared rotation seed")
    y_hat = np.zeros(d)
    for m in messages:
        idx = derive_subsample(m.seed, d, k)
        y_hat[idx] += m.payload
    y_hat *= d / (k * config.n)
    signs = _rotation_signs(shared.master_seed, shared.client_index, shared.round_index, d)
    return signs * fwht(y_hat) / np.sqrt(d)


# ---------------------------------------------------------------------------
# scheme-tag driven dispatch
# ---------------------------------------------------------------------------


def encode_for_scheme(
    x,
    scheme: str,
    seed: SketchSeed,
    k: int,
    shared_seed: SketchSeed | None = None,
    k_top: int | None = None,
) -> EncodedMessage:
    """Encode x for any scheme tag with a total per-client budget of k values."""
    if scheme not in SCHEME_TAGS:
        raise ParameterError(f"unknown scheme {scheme!r}")
    family = _FAMILY[scheme]
    if family == "rand_k":
        return randk_encode(x, seed, k)
    if family == "srht":
        return srht_family_encode(x, seed, k)
    if family == "wangni":
        return wangni_encode(x, seed, k)
    if family == "induced":
        if k < 2:
            raise ParameterError("induced encoding needs a budget of at least 2")
        kt = k // 2 if k_top is None else k_top
        return induced_encode(x, seed, kt, k - kt)
    if shared_seed is None:
        raise ParameterError("naive_rotation needs the shared rotation seed")
    return naive_rotation_encode(x, seed, k, shared_seed)


_DECODERS = {
    "rand_k": randk_decode,
    "rand_k_spatial_max": randk_spatial_decode,
    "rand_k_spatial_avg": randk_spatial_decode,
    "rand_k_spatial_opt": randk_spatial_decode,
    "rps_max": rps_decode,
    "rps_avg": rps_decode,
    "rps_opt": rps_decode,
    "wangni": wangni_decode,
    "induced": induced_decode,
    "naive_rotation": naive_rotation_decode,
}


def decode_for_scheme(messages, scheme: str, config: DecoderConfig) -> np.ndarray:
    """Decode a round of messages under the named scheme."""
    if scheme not in SCHEME_TAGS:
        raise ParameterError(f"unknown scheme {scheme!r}")
    return _DECODERS[scheme](messages, config)
