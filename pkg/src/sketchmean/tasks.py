"""Distributed optimization loops with pluggable mean estimators.

Each round, every client computes a local vector (covariance-vector product,
per-centroid mean, or gradient), the server estimates the client mean through
the configured compression scheme, and the loop advances on the estimate.
Metrics per round: the mean-estimation squared error ||x_hat - x_bar||^2
against the true (uncompressed) client mean, and a task-specific loss.

Dimensions that are not powers of two are zero-padded to the next power of
two for the sketched schemes; estimates are sliced back before use, and the
estimation error is always measured in the original space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ClientPartition
from .errors import ParameterError
from .estimators import (
    SCHEME_TAGS,
    DecoderConfig,
    decode_for_scheme,
    encode_for_scheme,
    transform_for_scheme,
)
from .harness import _CALIBRATION_SEED_OFFSET, resolve_beta
from .linalg import SHARED_CLIENT_INDEX, SketchSeed, eigh

__all__ = [
    "Estimator",
    "RoundRecord",
    "TASK_CSV_COLUMNS",
    "TaskHistory",
    "run_kmeans",
    "run_linreg",
    "run_power_iteration",
    "write_task_csv",
]

_DIVERGENCE_LOSS = 1e12

# schemes whose encoder requires a power-of-two dimension
_PADDED_SCHEMES = frozenset({"rps_max", "rps_avg", "rps_opt", "naive_rotation"})

# schemes whose decoder scales by the calibrated normalizer
_BETA_SCHEMES = frozenset(
    {"rand_k_spatial_max", "rand_k_spatial_avg", "rand_k_spatial_opt", "rps_max", "rps_avg", "rps_opt"}
)


def _next_pow2(d: int) -> int:
    return 1 << max(0, (d - 1).bit_length())


class Estimator:
    """A compression scheme bound to a task: encodes client vectors, decodes the mean.

    Every estimate_mean call consumes one fresh round index, so repeated
    mean estimations within a task round (e.g. one per centroid) draw
    independent sketches. ``warmup_rounds > 0`` switches the normalizer to
    an online estimate accumulated over the first rounds (using the true
    mean available to the simulator) instead of the offline calibration;
    it only affects schemes that use the calibrated normalizer.
    """

    def __init__(self, scheme: str, k: int, R: float | None = None,
                 beta_trials: int = 1000, warmup_rounds: int = 0):
        if scheme not in SCHEME_TAGS:
            raise ParameterError(f"unknown scheme {scheme!r}")
        if k < 1:
            raise ParameterError(f"need k >= 1, got {k}")
        if warmup_rounds < 0:
            raise ParameterError(f"warmup_rounds must be >= 0, got {warmup_rounds}")
        self.scheme = scheme
        self.k = k
        self.R = R
        self.beta_trials = beta_trials
        self.warmup_rounds = warmup_rounds
        self._bound = False

    def bind(self, n: int, d: int, master_seed: int):
        """Fix the client count and dimension; resolve padding and the normalizer."""
        self._n = n
        self._d = d
        self._pad = _next_pow2(d) if self.scheme in _PADDED_SCHEMES else d
        if self.k > self._pad:
            raise ParameterError(f"budget k={self.k} exceeds working dimension {self._pad}")
        transform = transform_for_scheme(self.scheme, n, self.R)
        self._config = DecoderConfig(n=n, d=self._pad, k=self.k, transform=transform, beta_bar=1.0)
        self._master = master_seed
        self._counter = 0
        self._ratios = []
        if self.scheme in _BETA_SCHEMES and self.warmup_rounds > 0:
            self._mult = None  # estimated online during the first rounds
        elif self.scheme in _BETA_SCHEMES:
            self._mult = resolve_beta(
                self.scheme, n, self._pad, self.k, R=self.R,
                beta_trials=self.beta_trials, beta_seed=master_seed + _CALIBRATION_SEED_OFFSET,
            )
        else:
            self._mult = 1.0  # decoder scales itself (rand_k, wangni, induced, naive_rotation)
        self._bound = True

    def estimate_mean(self, client_vectors) -> np.ndarray:
        if not self._bound:
            raise ParameterError("estimator must be bound to (n, d, master_seed) first")
        X = np.asarray(client_vectors, dtype=float)
        if X.shape != (self._n, self._d):
            raise ParameterError(f"expected client matrix of shape ({self._n}, {self._d}), got {X.shape}")
        t = self._counter
        self._counter += 1
        if self._pad != self._d:
            padded = np.zeros((self._n, self._pad))
            padded[:, : self._d] = X
        else:
            padded = X
        seeds = [SketchSeed(self._master, i, t) for i in range(self._n)]
        shared = SketchSeed(self._master, SHARED_CLIENT_INDEX, t)
        msgs = [
            encode_for_scheme(padded[i], self.scheme, seeds[i], self.k, shared_seed=shared)
            for i in range(self._n)
        ]
        raw = decode_for_scheme(msgs, self.scheme, self._config)[: self._d]
        if self._mult is not None:
            return self._mult * raw
        # warm-up: track <x_bar, x_bar> / <x_bar, raw> and average
        x_bar = X.mean(axis=0)
        num = float(x_bar @ x_bar)
        den = float(x_bar @ raw)
        if num > 0 and den > 0:
            self._ratios.append(num / den)
        mult = float(np.mean(self._ratios)) if self._ratios else 1.0
        if t + 1 >= self.warmup_rounds and self._ratios:
            self._mult = mult
        return mult * raw


@dataclass(frozen=True)
class RoundRecord:
    round: int
    scheme: str
    est_sq_error: float
    task_loss: float


@dataclass
class TaskHistory:
    task: str
    scheme: str
    records: list
    final_iterate: np.ndarray
    flags: list = field(default_factory=list)
    reference: np.ndarray | None = None

    def est_errors(self) -> np.ndarray:
        return np.array([r.est_sq_error for r in self.records])

    def losses(self) -> np.ndarray:
        return np.array([r.task_loss for r in self.records])


# ---------------------------------------------------------------------------
# power iteration
# ---------------------------------------------------------------------------

def run_power_iteration(partition: ClientPartition, estimator: Estimator, rounds: int,
                        master_seed: int = 0) -> TaskHistory:
    """Distributed power iteration on the client-averaged covariance.

    Each client holds C_i = A_i^T A_i / m_i and contributes C_i v_t; the
    server normalizes the estimated mean. task_loss records the distance
    ||v_t - v_top|| after sign alignment, with v_top from a dense eigensolver
    on (1/n) sum_i C_i.
    """
    if rounds < 1:
        raise ParameterError(f"need rounds >= 1, got {rounds}")
    n = partition.num_clients
    d = partition.dataset.dim
    covs = []
    for i in range(n):
        A = partition.client_features(i)
        covs.append(A.T @ A / A.shape[0])
    c_bar = sum(covs) / n
    v_top = eigh(c_bar).eigenvectors[:, 0]
    estimator.bind(n, d, master_seed)
    rng = np.random.default_rng((master_seed, 0xB0))
    v = rng.normal(size=d)
    v /= np.linalg.norm(v)
    records = []
    flags = []
    for t in range(rounds):
        local = np.stack([c @ v for c in covs])
        x_bar = local.mean(axis=0)
        est = estimator.estimate_mean(local)
        err = float(np.sum((est - x_bar) ** 2))
        norm = float(np.linalg.norm(est))
        if norm == 0.0:
            flags.append(f"zero_decode@{t}")
        else:
            v = est / norm
        sign = 1.0 if float(v @ v_top) >= 0 else -1.0
        dist = float(np.linalg.norm(sign * v - v_top))
        records.append(RoundRecord(t, estimator.scheme, err, dist))
    return TaskHistory("power_iteration", estimator.scheme, records, v, flags, reference=v_top)


# ---------------------------------------------------------------------------
# k-means (Lloyd)
# ---------------------------------------------------------------------------

def run_kmeans(partition: ClientPartition, estimator: Estimator, num_clusters: int, rounds: int,
               master_seed: int = 0) -> TaskHistory:
    """Federated Lloyd iterations: one mean estimation per centroid per round.

    Clients assign their points to the nearest centroid (ties to the lower
    index) and send per-centroid local means; a client with an empty cluster
    contributes a zero vector for it (flagged). Centroids are the unweighted
    decoded means across clients. task_loss is the global k-means loss under
    fresh nearest-centroid assignment after the update; est_sq_error averages
    the per-centroid estimation errors.
    """
    if rounds < 1:
        raise ParameterError(f"need rounds >= 1, got {rounds}")
    data = partition.dataset.features
    m, d = data.shape
    if num_clusters < 2 or num_clusters > m:
        raise ParameterError(f"need 2 <= num_clusters <= {m}, got {num_clusters}")
    n = partition.num_clients
    estimator.bind(n, d, master_seed)
    rng = np.random.default_rng((master_seed, 0xC1))
    centroids = data[rng.choice(m, size=num_clusters, replace=False)].copy()
    client_feats = [partition.client_features(i) for i in range(n)]
    records = []
    flags = []
    for t in range(rounds):
        client_means = np.zeros((num_clusters, n, d))
        for i, A in enumerate(client_feats):
            dist2 = ((A[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            assign = np.argmin(dist2, axis=1)
            for c in range(num_clusters):
                pts = A[assign == c]
                if pts.shape[0]:
                    client_means[c, i] = pts.mean(axis=0)
                else:
                    flags.append(f"empty_cluster:client{i}:centroid{c}@{t}")
        err_total = 0.0
        new_centroids = np.empty_like(centroids)
        for c in range(num_clusters):
            x_bar = client_means[c].mean(axis=0)
            est = estimator.estimate_mean(client_means[c])
            err_total += float(np.sum((est - x_bar) ** 2))
            new_centroids[c] = est
        centroids = new_centroids
        dist2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        loss = float(dist2.min(axis=1).sum())
        records.append(RoundRecord(t, estimator.scheme, err_total / num_clusters, loss))
    return TaskHistory("kmeans", estimator.scheme, records, centroids, flags)


# ---------------------------------------------------------------------------
# linear regression via gradient descent
# ---------------------------------------------------------------------------

def run_linreg(partition: ClientPartition, estimator: Estimator, rounds: int,
               learning_rate: float, master_seed: int = 0) -> TaskHistory:
    """Full-batch gradient descent on the client-averaged least-squares loss.

    Client i holds L_i(w) = ||A_i w - y_i||^2 / (2 m_i); the global objective
    is (1/n) sum_i L_i. Stops early (flagged) if the loss exceeds 1e12.
    """
    if rounds < 1:
        raise ParameterError(f"need rounds >= 1, got {rounds}")
    if learning_rate <= 0:
        raise ParameterError(f"need learning_rate > 0, got {learning_rate}")
    if partition.dataset.labels is None:
        raise ParameterError("linear regression needs target labels")
    n = partition.num_clients
    d = partition.dataset.dim
    clients = [(partition.client_features(i), np.asarray(partition.client_labels(i), dtype=float))
               for i in range(n)]
    estimator.bind(n, d, master_seed)
    w = np.zeros(d)
    records = []
    flags = []
    for t in range(rounds):
        grads = np.stack([A.T @ (A @ w - y) / A.shape[0] for A, y in clients])
        g_bar = grads.mean(axis=0)
        est = estimator.estimate_mean(grads)
        err = float(np.sum((est - g_bar) ** 2))
        w = w - learning_rate * est
        loss = float(np.mean([np.sum((A @ w - y) ** 2) / (2 * A.shape[0]) for A, y in clients]))
        records.append(RoundRecord(t, estimator.scheme, err, loss))
        if loss > _DIVERGENCE_LOSS:
            flags.append(f"diverged@{t}")
            break
    return TaskHistory("linreg", estimator.scheme, records, w, flags)


# ---------------------------------------------------------------------------
# CSV serialization (column order frozen; see README)
# ---------------------------------------------------------------------------

TASK_CSV_COLUMNS = ("round", "scheme", "est_sq_error", "task_loss")


def write_task_csv(histories, path):
    if isinstance(histories, TaskHistory):
        histories = [histories]
    lines = [",".join(TASK_CSV_COLUMNS)]
    for history in histories:
        for rec in history.records:
            lines.append(f"{rec.round},{rec.scheme},{rec.est_sq_error!r},{rec.task_loss!r}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
