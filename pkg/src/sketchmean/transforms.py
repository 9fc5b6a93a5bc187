"""Eigenvalue transforms and the cross-client correlation measure.

A transform is an affine scalar map T applied either to coordinate hit counts
(subsampling decoders) or to eigenvalues of the accumulated Gram matrix
(sketching decoders). Four kinds are supported:

- ``identity``: T(m) = m. Best when all clients hold the same vector.
- ``one``:      T(m) = 1. Best when client vectors are uncorrelated.
- ``opt``:      T(m) = 1 + (R/(n-1))*(m-1), interpolating by the known
                correlation R in [-1, n-1].
- ``avg``:      T(m) = 1 + (n/2)*(m-1)/(n-1), the midpoint configuration for
                when the correlation is unknown.

All four satisfy T(1) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UndefinedCorrelationError

__all__ = ["Transform", "TRANSFORM_KINDS", "eval_transform", "measure_correlation"]

TRANSFORM_KINDS = ("identity", "one", "opt", "avg")

# common aliases accepted when parsing user input
_KIND_ALIASES = {"max": "identity", "constant_one": "one", "const": "one"}


@dataclass(frozen=True)
class Transform:
    """An affine eigenvalue/count transform.

    ``n`` (client count) is required for the ``opt`` and ``avg`` kinds;
    ``R`` (correlation) only for ``opt``.
    """

    kind: str
    n: int | None = None
    R: float | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in TRANSFORM_KINDS:
            raise ParameterError(f"unknown transform kind {self.kind!r}")
        if kind in ("opt", "avg"):
            if self.n is None or self.n <= 1:
                raise ParameterError(f"{kind!r} transform needs a client count n >= 2")
        if kind == "opt":
            if self.R is None:
                raise ParameterError("'opt' transform needs the correlation R")
            if not (-1.0 <= self.R <= self.n - 1):
                raise ParameterError(
                    f"R must lie in [-1, n-1] = [-1, {self.n - 1}], got {self.R}"
                )

    def __call__(self, m):
        """Evaluate the transform at m (scalar or array), m >= 0."""
        m = np.asarray(m, dtype=np.float64)
        if np.any(m < 0):
            raise ParameterError("transform argument must be nonnegative")
        if self.kind == "identity":
            out = m
        elif self.kind == "one":
            out = np.ones_like(m)
        elif self.kind == "opt":
            out = 1.0 + (self.R / (self.n - 1)) * (m - 1.0)
        else:  # avg
            out = 1.0 + (self.n / 2.0) * (m - 1.0) / (self.n - 1)
        return out if out.ndim else float(out)


def eval_transform(transform: Transform, m):
    """Functional form of ``Transform.__call__``."""
    return transform(m)


def measure_correlation(vectors) -> float:
    """Correlation R of a family of client vectors.

    R = (sum_i sum_{l != i} <x_i, x_l>) / (sum_i ||x_i||^2), which always
    lies in [-1, n-1]. The numerator is the sum of the off-diagonal entries
    of the n x n inner-product matrix.
    """
    X = np.asarray(list(vectors), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ParameterError("need a nonempty sequence of equal-length vectors")
    gram = X @ X.T
    denom = float(np.trace(gram))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined: all vectors are zero")
    return (float(gram.sum()) - denom) / denom
