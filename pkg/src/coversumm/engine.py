"""Incremental centroid summarizer backed by an SG-tree and a candidate reservoir.

The summarizer keeps the exact k nearest neighbours of the running mean of a
vector stream. Instead of querying the index at every step it caches every
point within ``d_k + lambda`` of the mean observed at the last index query
and only re-queries once the mean has drifted by half the slack (or the cache
is full). Between queries the summary is a linear scan of the cache.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .base import StepRecord, StreamSummarizerMixin, Summary, select_k
from .sgtree import SGTree
from .vectorspace import (
    BoundParams,
    DimensionMismatch,
    Point,
    RunningCentroid,
    distances,
    inverse_t,
    lambda_threshold,
)

__all__ = [
    "CoverSumm",
    "Reservoir",
    "Summary",
    "StepRecord",
    "ReservoirInvariantError",
    "VARIANTS",
    "select_k",
]

VARIANTS = ("reservoir", "knn_plus_range", "lazy_reservoir")

# margin for the "every cached summary member beats every uncached point" test
_CERT_RTOL = 1e-12


class ReservoirInvariantError(RuntimeError):
    """The reservoir holds fewer points than the summary needs (a bug)."""


@dataclass
class Reservoir:
    """Cached candidates around the centroid of the last index query.

    ``radius`` is the largest cached distance at the last rebuild. New
    arrivals are admitted when they fall within ``admit_radius`` of that
    centroid; every uncached point is strictly farther than ``admit_radius``.
    """

    capacity: int
    ids: List[int] = field(default_factory=list)
    stored_distances: List[float] = field(default_factory=list)
    radius: float = 0.0
    admit_radius: float = math.inf
    d_k: float = math.inf
    _mat: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.ids)

    def reset(self, ids: List[int], dists: List[float], vectors: np.ndarray) -> None:
        self.ids = list(ids)
        self.stored_distances = list(dists)
        cap = len(ids) + 64
        self._mat = np.empty((cap, vectors.shape[1]), dtype=np.float64)
        self._mat[: len(ids)] = vectors
        self.radius = max(dists) if dists else 0.0

    def add(self, pid: int, dist: float, vec: np.ndarray) -> None:
        n = len(self.ids)
        if n == self._mat.shape[0]:
            grown = np.empty((2 * n, self._mat.shape[1]), dtype=np.float64)
            grown[:n] = self._mat[:n]
            self._mat = grown
        self._mat[n] = vec
        self.ids.append(pid)
        self.stored_distances.append(dist)

    def discard(self, doomed: set) -> int:
        keep = [i for i, pid in enumerate(self.ids) if pid not in doomed]
        removed = len(self.ids) - len(keep)
        if removed:
            self._mat[: len(keep)] = self._mat[keep]
            self.ids = [self.ids[i] for i in keep]
            self.stored_distances = [self.stored_distances[i] for i in keep]
        return removed

    @property
    def vectors(self) -> np.ndarray:
        return self._mat[: len(self.ids)]


class CoverSumm(StreamSummarizerMixin, BaseEstimator):
    """Exact k-nearest-neighbours-of-the-mean summarizer for vector streams.

    Parameters
    ----------
    k : int
        Summary budget.
    alpha : float
        Scale of the reservoir slack ``lambda``. Smaller values shrink the
        reservoir and trigger index queries more often. Exactness does not
        depend on it.
    c_max : int, optional
        Reservoir capacity; defaults to ``8 * k``.
    variant : {"reservoir", "knn_plus_range", "lazy_reservoir"}
        How the reservoir is rebuilt. ``lazy_reservoir`` buffers index
        insertions until the next rebuild.
    gamma : float
        SG-tree level ratio.
    support_width : float, optional
        Side of the support box used in ``lambda``. When ``None`` the running
        estimate ``2 * max |coordinate|`` is used.
    delta_schedule : callable, optional
        Confidence schedule ``t -> delta``; defaults to ``1 / t``.

    Attributes
    ----------
    summary_ : Summary
        Summary after the most recent step or deletion.
    records_ : list of StepRecord
        One record per streamed point.
    n_reservoir_searches_ : int
    """

    def __init__(
        self,
        k: int = 20,
        alpha: float = 0.005,
        c_max: Optional[int] = None,
        variant: str = "lazy_reservoir",
        gamma: float = 2.0,
        support_width: Optional[float] = None,
        delta_schedule: Optional[Callable[[int], float]] = None,
    ):
        self.k = k
        self.alpha = alpha
        self.c_max = c_max
        self.variant = variant
        self.gamma = gamma
        self.support_width = support_width
        self.delta_schedule = delta_schedule

    # ---------------------------------------------------------------- set-up

    def _check_params(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if self.c_max is not None and not self.c_max > self.k:
            raise ValueError(f"c_max must exceed k, got c_max={self.c_max}, k={self.k}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")

    @property
    def capacity(self) -> int:
        return self.c_max if self.c_max is not None else 8 * self.k

    def _initialize(self, dim: int) -> None:
        self._check_params()
        self.n_features_in_ = dim
        self.bound_ = BoundParams(
            alpha=self.alpha,
            dim=dim,
            support_width=self.support_width,
            delta_schedule=self.delta_schedule or inverse_t,
        )
        self.centroid_ = RunningCentroid(dim)
        self.tree_ = SGTree(dim=dim, base=self.gamma)
        self.reservoir_ = Reservoir(capacity=self.capacity)
        self.vectors_: Dict[int, np.ndarray] = {}
        self.texts_: Dict[int, str] = {}
        self.pending_: List[Point] = []
        self.lam_ = 0.0
        self.slack_ = 0.0
        self.n_reservoir_searches_ = 0
        self.last_id_ = -1
        self.records_: List[StepRecord] = []
        self.summary_ = Summary(step=0, member_ids=[], distances=[], changed=False)
        self.step_ = 0

    def reset(self) -> "CoverSumm":
        for attr in ("n_features_in_", "centroid_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self

    # ------------------------------------------------------------- streaming

    def step(self, point: Point) -> Tuple[Summary, StepRecord]:
        """Consume one arrival and return its summary and step metrics."""
        if not hasattr(self, "centroid_"):
            self._initialize(point.dim)
        if point.dim != self.n_features_in_:
            raise DimensionMismatch(f"expected dim {self.n_features_in_}, got {point.dim}")
        if point.id <= self.last_id_:
            raise ValueError(f"arrival id {point.id} is not greater than the previous id {self.last_id_}")
        t0 = time.perf_counter_ns()
        vec = point.vec
        self.last_id_ = point.id
        self.step_ += 1
        self.vectors_[point.id] = vec
        if point.text is not None:
            self.texts_[point.id] = point.text
        c = self.centroid_
        c.push(vec)
        self._index_arrival(point)

        drift = 0.0
        mean = c.mean
        if c.last_query is None:
            rebuilt = True
            self._rebuild(mean)
        else:
            drift = float(distances(mean, c.last_query))
            rebuilt = self._needs_rebuild(drift)
            if rebuilt:
                self._rebuild(mean)
            else:
                self._maybe_admit(point)
                if len(self.reservoir_) < min(self.k, c.count):
                    # a deletion left the cache short and the arrival fell outside it
                    rebuilt = True
                    self._rebuild(mean)
        summary = self._summary(self.step_, mean)
        elapsed = time.perf_counter_ns() - t0
        record = StepRecord(
            step=self.step_,
            elapsed_ns=elapsed,
            did_reservoir_search=rebuilt,
            cumulative_rs=self.n_reservoir_searches_,
            reservoir_size=len(self.reservoir_),
            drift=drift,
            lam=self.lam_,
            summary=summary,
        )
        self.records_.append(record)
        return summary, record

    def _index_arrival(self, point: Point) -> None:
        if self.variant == "lazy_reservoir":
            self.pending_.append(point)
        else:
            self.tree_.insert(point)

    def _needs_rebuild(self, drift: float) -> bool:
        if not math.isfinite(self.reservoir_.d_k) and self.centroid_.count >= self.k:
            return True
        return drift >= self.slack_ / 2.0 or len(self.reservoir_) >= self.capacity

    def _maybe_admit(self, point: Point) -> None:
        res = self.reservoir_
        d = float(distances(point.vec, self.centroid_.last_query))
        if d <= res.admit_radius:
            res.add(point.id, d, point.vec)

    def flush_pending(self) -> None:
        """Insert every buffered arrival into the tree."""
        for point in self.pending_:
            self.tree_.insert(point)
        self.pending_ = []

    def _threshold(self, n: int) -> float:
        c = self.centroid_
        width = self.support_width if self.support_width is not None else c.support_width
        if width <= 0:
            return 0.0
        return lambda_threshold(self.bound_, n, support_width=width)

    def _query_tree(self, mean: np.ndarray, lam: float) -> Tuple[List[Tuple[int, float]], float]:
        if self.variant == "knn_plus_range":
            nearest = self.tree_.knn_with_distances(mean, self.k)
            d_k = nearest[-1][1]
            return self.tree_.range_with_distances(mean, d_k + lam), d_k
        res = self.tree_.reservoir_search(mean, lam, self.k)
        return res.members, res.d_k

    def _rebuild(self, mean: Optional[np.ndarray] = None) -> None:
        if self.variant == "lazy_reservoir":
            self.flush_pending()
        c = self.centroid_
        n = c.count
        if mean is None:
            mean = c.mean
        lam = self._threshold(n)
        members, d_k = self._query_tree(mean, lam)
        if n < self.k:
            # every point is cached, so every arrival must be too
            d_k = math.inf
        members, admit = self._fit_capacity(members, d_k, lam)
        ids = [pid for pid, _ in members]
        dists = [d for _, d in members]
        vecs = np.array([self.vectors_[pid] for pid in ids], dtype=np.float64).reshape(len(ids), -1)
        res = self.reservoir_
        res.reset(ids, dists, vecs)
        res.admit_radius = admit
        res.d_k = d_k
        self.lam_ = lam
        self.slack_ = admit - d_k if math.isfinite(d_k) else lam
        c.last_query = mean.copy()
        self.n_reservoir_searches_ += 1

    def _fit_capacity(self, members, d_k: float, lam: float):
        """Trim a rebuilt reservoir below capacity without losing exactness.

        The admission radius becomes the largest kept distance; everything
        dropped lies strictly beyond it. Trimming is skipped when it would
        leave fewer than k members.
        """
        admit = d_k + lam
        limit = self.capacity - 1
        if len(members) <= limit or not math.isfinite(d_k):
            return members, admit
        edge = members[limit][1]
        keep = limit
        while keep > 0 and members[keep - 1][1] == edge:
            keep -= 1
        if keep < self.k:
            return members, admit
        return members[:keep], members[keep - 1][1]

    def summary_from_reservoir(self) -> Summary:
        return self._summary(self.step_)

    def _summary(self, step: int, mean: Optional[np.ndarray] = None) -> Summary:
        n = self.centroid_.count
        res = self.reservoir_
        need = min(self.k, n)
        if len(res) < need:
            raise ReservoirInvariantError(f"reservoir holds {len(res)} points, summary needs {need}")
        if n == 0:
            ids, dists = [], []
        else:
            if mean is None:
                mean = self.centroid_.mean
            ids, dists = select_k(res.ids, distances(res.vectors, mean), self.k)
        changed = ids != self.summary_.member_ids
        self.summary_ = Summary(step=step, member_ids=ids, distances=dists, changed=changed)
        return self.summary_

    # -------------------------------------------------------------- deletion

    def delete_batch(self, ids: Iterable[int]) -> Summary:
        """Remove points by id and return the summary over the survivors."""
        check_is_fitted(self, "centroid_")
        ids = list(dict.fromkeys(int(i) for i in ids))
        missing = [i for i in ids if i not in self.vectors_]
        if missing:
            raise KeyError(f"unknown point ids: {missing[:10]}")
        doomed = set(ids)
        c = self.centroid_
        removed = np.array([self.vectors_[i] for i in ids], dtype=np.float64).reshape(len(ids), c.dim)
        if self.pending_:
            self.pending_ = [p for p in self.pending_ if p.id not in doomed]
        for pid in ids:
            if pid in self.tree_:
                self.tree_.delete(pid)
            del self.vectors_[pid]
            self.texts_.pop(pid, None)
        self.reservoir_.discard(doomed)
        exact_sum = None
        if 2 * len(ids) > c.count:
            exact_sum = np.zeros(c.dim)
            for pid in sorted(self.vectors_):
                exact_sum += self.vectors_[pid]
        c.remove(removed, exact_sum=exact_sum)
        if c.count == 0:
            self.reservoir_.reset([], [], np.empty((0, c.dim)))
            c.last_query = None
            return self._summary(self.step_)
        mean = c.mean
        drift = float(distances(mean, c.last_query))
        if drift > self.slack_ / 2.0 or len(self.reservoir_) < min(self.k, c.count) or not self._certified(mean, drift):
            self._rebuild(mean)
        return self._summary(self.step_)

    def _certified(self, mean: np.ndarray, drift: float) -> bool:
        """Whether the k best cached points provably beat every uncached one.

        Uncached points lie beyond ``admit_radius`` of the last query centroid,
        hence beyond ``admit_radius - drift`` of the current one.
        """
        res = self.reservoir_
        if not math.isfinite(res.admit_radius):
            return True
        need = min(self.k, self.centroid_.count)
        _, dists = select_k(res.ids, distances(res.vectors, mean), need)
        limit = res.admit_radius - drift
        return len(dists) == need and dists[-1] < limit - _CERT_RTOL * (1.0 + abs(limit))

    # ------------------------------------------------------------- reporting

    @property
    def n_points(self) -> int:
        return self.centroid_.count if hasattr(self, "centroid_") else 0

    def summary_texts(self) -> List[Optional[str]]:
        return [self.texts_.get(pid) for pid in self.summary_.member_ids]
