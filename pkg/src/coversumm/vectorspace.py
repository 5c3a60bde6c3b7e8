"""Dense-vector primitives shared by every index and summarizer.

All arithmetic is float64. Distances are always computed through
:func:`distance` / :func:`distances` so that the tree, the reservoir and the
brute-force oracle produce bit-identical values for the same pair of vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

try:
    from numpy._core._multiarray_umath import c_einsum
except ImportError:  # numpy < 2
    from numpy.core._multiarray_umath import c_einsum

__all__ = [
    "Point",
    "RunningCentroid",
    "BoundParams",
    "DimensionMismatch",
    "distance",
    "distances",
    "lambda_threshold",
    "centroid_bound",
    "inverse_t",
]


class DimensionMismatch(ValueError):
    """Raised when two vectors (or a vector and an index) disagree on D."""


@dataclass(frozen=True)
class Point:
    """A streamed vector with its arrival id and optional source sentence."""

    id: int
    vec: np.ndarray
    text: Optional[str] = None

    def __post_init__(self):
        vec = np.ascontiguousarray(self.vec, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionMismatch(f"point vector must be 1-d, got shape {vec.shape}")
        if self.id < 0:
            raise ValueError(f"point id must be non-negative, got {self.id}")
        object.__setattr__(self, "vec", vec)

    @property
    def dim(self) -> int:
        return self.vec.shape[0]


def _as_vec(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def distances(X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distance from every row of ``X`` to ``q``.

    Row ``i`` of the result is bit-identical to ``distance(X[i], q)``.
    """
    X = np.asarray(X, dtype=np.float64)
    q = _as_vec(q)
    if X.shape[-1] != q.shape[-1]:
        raise DimensionMismatch(f"dimension mismatch: {X.shape[-1]} != {q.shape[-1]}")
    diff = X - q
    if diff.ndim == 1:
        diff = diff[None, :]
        return np.sqrt(c_einsum("ij,ij->i", diff, diff))[0]
    return np.sqrt(c_einsum("ij,ij->i", diff, diff))


def distance(a, b) -> float:
    """Euclidean distance between two vectors of equal dimensionality."""
    a = _as_vec(a)
    b = _as_vec(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape} != {b.shape}")
    return float(distances(a[None, :], b)[0])


def inverse_t(t: int) -> float:
    """Default confidence schedule, delta(t) = 1/t."""
    return 1.0 / t


@dataclass
class BoundParams:
    """Parameters of the centroid concentration bound.

    Parameters
    ----------
    alpha : float
        Scale on the squared threshold; trades reservoir size for rebuilds.
    dim : int
        Dimensionality D of the stream.
    support_width : float or None
        Side length b of the support box. ``None`` means "estimate from the
        data" (see :class:`RunningCentroid`); the caller then passes the
        running estimate to the threshold functions.
    delta_schedule : callable
        Maps a step count t >= 1 to a confidence delta in (0, 1].
    """

    alpha: float = 1.0
    dim: int = 1
    support_width: Optional[float] = None
    delta_schedule: Callable[[int], float] = field(default=inverse_t)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.support_width is not None and not self.support_width > 0:
            raise ValueError(f"support_width must be positive, got {self.support_width}")

    def width(self, estimate: Optional[float] = None) -> float:
        if self.support_width is not None:
            return float(self.support_width)
        if estimate is None:
            raise ValueError("support_width is unset and no running estimate was given")
        return float(estimate)

    def log_term(self, t: int) -> float:
        if t < 1:
            raise ValueError(f"t must be >= 1, got {t}")
        delta = self.delta_schedule(t)
        if not 0 < delta <= 1:
            raise ValueError(f"delta_schedule({t}) = {delta} is outside (0, 1]")
        return math.log(2.0 / delta)


def lambda_threshold(p: BoundParams, t: int, support_width: Optional[float] = None) -> float:
    """Reservoir slack ``sqrt(2 * alpha * D * b**2 * ln(2/delta) / t)``."""
    b = p.width(support_width)
    return math.sqrt(2.0 * p.alpha * p.dim * b * b * p.log_term(t) / t)


def centroid_bound(p: BoundParams, t: int, support_width: Optional[float] = None) -> float:
    """Deviation of the running mean from the true mean, ``sqrt(D b**2 ln(2/delta) / 2t)``.

    ``alpha`` does not enter this bound.
    """
    b = p.width(support_width)
    return math.sqrt(p.dim * b * b * p.log_term(t) / (2.0 * t))


class RunningCentroid:
    """Exact streaming mean with O(1) push and a batch downdate.

    The sum is accumulated left to right in arrival order, so the mean after
    pushing ``x_1..x_t`` equals ``np.add.reduce`` applied in that order
    divided by ``t``.

    ``box_halfwidth`` tracks the largest absolute coordinate seen so far; the
    support width estimate is twice that.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.sum = np.zeros(dim, dtype=np.float64)
        self.count = 0
        self.last_query: Optional[np.ndarray] = None
        self._peak = np.zeros(dim, dtype=np.float64)
        self._trough = np.zeros(dim, dtype=np.float64)

    def _check(self, x) -> np.ndarray:
        x = _as_vec(x)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected a vector of dim {self.dim}, got shape {x.shape}")
        return x

    def push(self, x) -> "RunningCentroid":
        x = self._check(x)
        self.sum += x
        self.count += 1
        np.maximum(self._peak, x, out=self._peak)
        np.minimum(self._trough, x, out=self._trough)
        return self

    @property
    def box_halfwidth(self) -> float:
        return float(max(self._peak.max(), -self._trough.min()))

    def remove(self, X, exact_sum: Optional[np.ndarray] = None) -> "RunningCentroid":
        """Remove a batch of previously pushed vectors.

        When ``exact_sum`` is given (the freshly recomputed sum of the
        survivors) it replaces the downdated accumulator. ``box_halfwidth``
        is left untouched: a stale, larger support only widens the bound.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] > self.count:
            raise ValueError("cannot remove more vectors than were pushed")
        if X.shape[0] and X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected vectors of dim {self.dim}, got {X.shape[1]}")
        if exact_sum is not None:
            self.sum = np.array(exact_sum, dtype=np.float64)
        else:
            for row in X:
                self.sum -= row
        self.count -= X.shape[0]
        if self.count == 0:
            self.sum[:] = 0.0
        return self

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("mean of an empty centroid")
        return self.sum / self.count

    @property
    def support_width(self) -> float:
        return 2.0 * self.box_halfwidth

    def mark_query(self) -> None:
        self.last_query = self.mean.copy()

    def drift(self) -> float:
        if self.last_query is None:
            raise ValueError("no reservoir query has been recorded yet")
        return distance(self.mean, self.last_query)
