"""Dataset loading, partitioning across clients, and synthetic generators.

IDX files are the big-endian tensor format used by the classic image
benchmarks: two zero bytes, a type code (0x08 = unsigned byte), the number
of dimensions, then each dimension as a 4-byte big-endian integer, then the
raw values in row-major order. Image tensors carry magic 0x00000803.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError

__all__ = [
    "ClientPartition",
    "Dataset",
    "bilinear_resize",
    "gen_synthetic",
    "load_csv_regression",
    "load_idx",
    "load_idx_images",
    "split_iid",
    "split_noniid",
    "write_idx",
]

_IDX_UBYTE = 0x08


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (m samples x d features) with optional labels.

    Integer labels mark a classification dataset, float labels a regression
    target; ``labels is None`` for unlabeled data.
    """

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ParameterError(f"features must be a non-empty 2-D matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ParameterError("features must be finite")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (feats.shape[0],):
                raise ParameterError(
                    f"labels must have length {feats.shape[0]}, got shape {labels.shape}"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClientPartition:
    """Disjoint assignment of dataset rows to clients."""

    dataset: Dataset
    client_indices: tuple
    mode: str

    def __post_init__(self):
        total = np.concatenate([np.asarray(ix) for ix in self.client_indices])
        if sorted(total.tolist()) != list(range(self.dataset.num_samples)):
            raise ParameterError("client indices must be a disjoint cover of the dataset rows")

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)

    def client_features(self, i: int) -> np.ndarray:
        return self.dataset.features[self.client_indices[i]]

    def client_labels(self, i: int):
        if self.dataset.labels is None:
            return None
        return self.dataset.labels[self.client_indices[i]]

    def export_indices(self, path):
        lines = [" ".join(str(int(j)) for j in ix) for ix in self.client_indices]
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# IDX format
# ---------------------------------------------------------------------------

def load_idx(path) -> np.ndarray:
    """Raw IDX tensor as a uint8 array (any number of dimensions)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated IDX header at byte {len(raw)} (need 4 bytes)")
    if raw[0] != 0 or raw[1] != 0:
        raise FormatError(f"{path}: bad IDX magic at byte 0: {raw[:4].hex()}")
    type_code, ndim = raw[2], raw[3]
    if type_code != _IDX_UBYTE:
        raise FormatError(f"{path}: unsupported IDX type code 0x{type_code:02x} at byte 2")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated IDX dimension list at byte {len(raw)} (need {header_end})")
    dims = [int.from_bytes(raw[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if len(raw) != header_end + count:
        raise FormatError(
            f"{path}: expected {count} data bytes at offset {header_end}, file has {len(raw) - header_end}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(dims)


def write_idx(array: np.ndarray, path):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, _IDX_UBYTE, array.ndim])
    header += b"".join(int(s).to_bytes(4, "big") for s in array.shape)
    Path(path).write_bytes(header + array.tobytes())


def bilinear_resize(images: np.ndarray, out_size: int) -> np.ndarray:
    """Resize (m, r, c) image stacks with a corner-aligned bilinear grid."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 3:
        raise ParameterError(f"expected (m, rows, cols) image stack, got shape {images.shape}")
    if out_size < 1:
        raise ParameterError(f"out_size must be >= 1, got {out_size}")

    def axis_weights(in_size):
        if out_size == 1 or in_size == 1:
            src = np.full(out_size, (in_size - 1) / 2.0)
        else:
            src = np.arange(out_size) * (in_size - 1) / (out_size - 1)
        lo = np.floor(src).astype(int)
        lo = np.clip(lo, 0, in_size - 1)
        hi = np.minimum(lo + 1, in_size - 1)
        frac = src - lo
        return lo, hi, frac

    r_lo, r_hi, r_frac = axis_weights(images.shape[1])
    c_lo, c_hi, c_frac = axis_weights(images.shape[2])
    rows = images[:, r_lo, :] * (1 - r_frac)[None, :, None] + images[:, r_hi, :] * r_frac[None, :, None]
    out = rows[:, :, c_lo] * (1 - c_frac)[None, None, :] + rows[:, :, c_hi] * c_frac[None, None, :]
    return out


def load_idx_images(path, resize_to: int) -> Dataset:
    """Images from an IDX file, resized, flattened, and scaled to [0, 1]."""
    raw = load_idx(path)
    if raw.ndim != 3:
        raise FormatError(f"{path}: expected a 3-D image tensor (magic 0x00000803), got {raw.ndim}-D")
    resized = bilinear_resize(raw.astype(float), resize_to)
    flat = resized.reshape(raw.shape[0], resize_to * resize_to) / 255.0
    return Dataset(features=flat)


# ---------------------------------------------------------------------------
# CSV regression data
# ---------------------------------------------------------------------------

def load_csv_regression(path, feature_count: int, target_column: str) -> Dataset:
    """First ``feature_count`` columns as features, one named column as target."""
    if feature_count < 1:
        raise ParameterError(f"feature_count must be >= 1, got {feature_count}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [name.strip() for name in header]
        if target_column not in header:
            raise ParameterError(f"target column {target_column!r} not in header {header[:8]}...")
        if feature_count > len(header):
            raise ParameterError(
                f"feature_count={feature_count} exceeds the {len(header)} columns present"
            )
        target_idx = header.index(target_column)
        features = []
        targets = []
        for row_num, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: row {row_num} has {len(row)} fields, expected {len(header)}")
            try:
                features.append([float(row[j]) for j in range(feature_count)])
            except ValueError:
                bad = next(j for j in range(feature_count) if not _is_number(row[j]))
                raise FormatError(
                    f"{path}: non-numeric value {row[bad]!r} at row {row_num}, column {header[bad]!r}"
                ) from None
            if not _is_number(row[target_idx]):
                raise FormatError(
                    f"{path}: non-numeric target {row[target_idx]!r} at row {row_num}"
                )
            targets.append(float(row[target_idx]))
    if not features:
        raise FormatError(f"{path}: no data rows")
    return Dataset(features=np.array(features), labels=np.array(targets))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# client splits
# ---------------------------------------------------------------------------

def split_iid(dataset: Dataset, n: int, seed: int = 0) -> ClientPartition:
    """Seeded shuffle, then contiguous chunks; remainder goes one-per-client from client 0."""
    m = dataset.num_samples
    if n < 1 or n > m:
        raise ParameterError(f"need 1 <= n <= {m} clients, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    base, extra = divmod(m, n)
    sizes = [base + (1 if i < extra else 0) for i in range(n)]
    bounds = np.cumsum([0] + sizes)
    parts = tuple(order[bounds[i] : bounds[i + 1]] for i in range(n))
    return ClientPartition(dataset=dataset, client_indices=parts, mode="iid")


def split_noniid(dataset: Dataset, n: int, seed: int = 0) -> ClientPartition:
    """Label-skewed split: 2n label-sorted shards, 2 per client (classification);
    target-sorted contiguous chunks (regression)."""
    if dataset.labels is None:
        raise ParameterError("non-IID split needs labels")
    m = dataset.num_samples
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    if np.issubdtype(dataset.labels.dtype, np.integer):
        if m < 2 * n:
            raise ParameterError(f"classification split needs m >= 2n, got m={m}, n={n}")
        order = np.argsort(dataset.labels, kind="stable")
        shards = np.array_split(order, 2 * n)
        rng = np.random.default_rng(seed)
        shard_order = rng.permutation(2 * n)
        parts = tuple(
            np.concatenate([shards[shard_order[2 * i]], shards[shard_order[2 * i + 1]]])
            for i in range(n)
        )
    else:
        if m < n:
            raise ParameterError(f"regression split needs m >= n, got m={m}, n={n}")
        order = np.argsort(dataset.labels, kind="stable")
        parts = tuple(np.array_split(order, n))
    return ClientPartition(dataset=dataset, client_indices=parts, mode="noniid")


# ---------------------------------------------------------------------------
# synthetic datasets
# ---------------------------------------------------------------------------

_SYNTHETIC_KINDS = ("spiked_covariance", "blobs", "linear")


def gen_synthetic(kind: str, params: dict | None = None, seed: int = 0) -> Dataset:
    """Self-contained datasets for the three task runners.

    spiked_covariance: m, d, ratio — zero-mean Gaussian whose first coordinate
        has variance ``ratio`` (top-two covariance eigenvalue ratio = ratio).
    blobs: centers (c x d), m, noise — isotropic Gaussian clusters, integer
        cluster labels, samples assigned to clusters round-robin.
    linear: m, d, noise, w_star — features N(0,1), targets X @ w_star + noise;
        w_star defaults to a seeded standard-normal draw.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "spiked_covariance":
        m = int(params.pop("m", 1000))
        d = int(params.pop("d", 32))
        ratio = float(params.pop("ratio", 10.0))
        _reject_unknown(kind, params)
        if m < 1 or d < 1 or ratio <= 0:
            raise ParameterError(f"invalid spiked_covariance params m={m}, d={d}, ratio={ratio}")
        x = rng.normal(size=(m, d))
        x[:, 0] *= np.sqrt(ratio)
        return Dataset(features=x)
    if kind == "blobs":
        centers = np.asarray(params.pop("centers", [[0.0, 0.0], [5.0, 5.0]]), dtype=float)
        m = int(params.pop("m", 200))
        noise = float(params.pop("noise", 0.5))
        _reject_unknown(kind, params)
        if centers.ndim != 2 or m < 1 or noise < 0:
            raise ParameterError(f"invalid blobs params centers shape {centers.shape}, m={m}, noise={noise}")
        assign = np.arange(m) % centers.shape[0]
        x = centers[assign] + noise * rng.normal(size=(m, centers.shape[1]))
        return Dataset(features=x, labels=assign.astype(np.int64))
    if kind == "linear":
        m = int(params.pop("m", 500))
        d = int(params.pop("d", 16))
        noise = float(params.pop("noise", 0.1))
        w_star = params.pop("w_star", None)
        _reject_unknown(kind, params)
        if m < 1 or d < 1 or noise < 0:
            raise ParameterError(f"invalid linear params m={m}, d={d}, noise={noise}")
        w = rng.normal(size=d) if w_star is None else np.asarray(w_star, dtype=float)
        if w.shape != (d,):
            raise ParameterError(f"w_star must have shape ({d},), got {w.shape}")
        x = rng.normal(size=(m, d))
        y = x @ w + noise * rng.normal(size=m)
        return Dataset(features=x, labels=y)
    raise ParameterError(f"unknown synthetic kind {kind!r}; expected one of {_SYNTHETIC_KINDS}")


def _reject_unknown(kind, leftover: dict):
    if leftover:
        raise ParameterError(f"unknown {kind} parameters: {sorted(leftover)}")
