"""Comparison summarizers sharing the ``step(point)`` interface of :class:`CoverSumm`.

``BruteForce`` and ``NaiveTree`` are exact; ``RandomReservoir`` and
``DecayLambda`` are the approximate reservoir policies and carry no
exactness guarantee.
"""

from __future__ import annotations

import math
import time
from typing import Iterable, List, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .base import StepRecord, StreamSummarizerMixin, Summary, select_k
from .engine import CoverSumm
from .sgtree import SGTree
from .vectorspace import DimensionMismatch, Point, RunningCentroid, distances

__all__ = ["BruteForce", "NaiveTree", "RandomReservoir", "DecayLambda", "BASELINES"]


class _ExactBaseline(StreamSummarizerMixin, BaseEstimator):
    def __init__(self, k: int = 20):
        self.k = k

    def _check_params(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")

    def _initialize(self, dim: int) -> None:
        self._check_params()
        self.n_features_in_ = dim
        self.centroid_ = RunningCentroid(dim)
        self.last_id_ = -1
        self.step_ = 0
        self.records_: List[StepRecord] = []
        self.summary_ = Summary(step=0, member_ids=[], distances=[], changed=False)
        self.n_queries_ = 0

    def _accept(self, point: Point) -> None:
        if not hasattr(self, "centroid_"):
            self._initialize(point.dim)
        if point.dim != self.n_features_in_:
            raise DimensionMismatch(f"expected dim {self.n_features_in_}, got {point.dim}")
        if point.id <= self.last_id_:
            raise ValueError(f"arrival id {point.id} is not greater than the previous id {self.last_id_}")
        self.last_id_ = point.id
        self.step_ += 1

    def _finish(self, ids, dists, t0: int):
        changed = ids != self.summary_.member_ids
        self.summary_ = Summary(step=self.step_, member_ids=ids, distances=dists, changed=changed)
        record = StepRecord(
            step=self.step_,
            elapsed_ns=time.perf_counter_ns() - t0,
            did_reservoir_search=False,
            cumulative_rs=0,
            reservoir_size=0,
            drift=0.0,
            lam=0.0,
            summary=self.summary_,
        )
        self.records_.append(record)
        return self.summary_, record

    @property
    def n_points(self) -> int:
        return self.centroid_.count if hasattr(self, "centroid_") else 0


class BruteForce(_ExactBaseline):
    """Full linear scan from the running mean at every step; the ground truth."""

    def _initialize(self, dim: int) -> None:
        super()._initialize(dim)
        self._X = np.empty((1024, dim), dtype=np.float64)
        self._ids = np.empty(1024, dtype=np.int64)
        self._n = 0

    def step(self, point: Point):
        self._accept(point)
        t0 = time.perf_counter_ns()
        if self._n == self._X.shape[0]:
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._ids = np.concatenate([self._ids, np.empty_like(self._ids)])
        self._X[self._n] = point.vec
        self._ids[self._n] = point.id
        self._n += 1
        self.centroid_.push(point.vec)
        ids, dists = self._scan()
        self.n_queries_ += 1
        return self._finish(ids, dists, t0)

    def _scan(self):
        if self._n == 0:
            return [], []
        return select_k(self._ids[: self._n], distances(self._X[: self._n], self.centroid_.mean), self.k)

    def delete_batch(self, ids: Iterable[int]) -> Summary:
        check_is_fitted(self, "centroid_")
        ids = list(dict.fromkeys(int(i) for i in ids))
        live = self._ids[: self._n]
        pos = {int(pid): i for i, pid in enumerate(live)}
        missing = [i for i in ids if i not in pos]
        if missing:
            raise KeyError(f"unknown point ids: {missing[:10]}")
        rows = [pos[i] for i in ids]
        removed = self._X[rows].copy()
        keep = np.ones(self._n, dtype=bool)
        keep[rows] = False
        n_keep = int(keep.sum())
        self._X[:n_keep] = self._X[: self._n][keep]
        self._ids[:n_keep] = live[keep]
        self._n = n_keep
        exact_sum = None
        c = self.centroid_
        if 2 * len(ids) > c.count:
            exact_sum = np.zeros(c.dim)
            for i in np.argsort(self._ids[: self._n], kind="stable"):
                exact_sum += self._X[i]
        c.remove(removed, exact_sum=exact_sum)
        ids_out, dists = self._scan()
        changed = ids_out != self.summary_.member_ids
        self.summary_ = Summary(step=self.step_, member_ids=ids_out, distances=dists, changed=changed)
        return self.summary_

    def live_ids(self) -> List[int]:
        return sorted(self._ids[: self._n].tolist())


class NaiveTree(_ExactBaseline):
    """Insert into an SG-tree and run a k-NN query from the mean at every step."""

    def __init__(self, k: int = 20, gamma: float = 2.0):
        self.k = k
        self.gamma = gamma

    def _initialize(self, dim: int) -> None:
        super()._initialize(dim)
        self.tree_ = SGTree(dim=dim, base=self.gamma)

    def step(self, point: Point):
        self._accept(point)
        t0 = time.perf_counter_ns()
        self.tree_.insert(point)
        self.centroid_.push(point.vec)
        found = self.tree_.knn_with_distances(self.centroid_.mean, self.k)
        self.n_queries_ += 1
        return self._finish([i for i, _ in found], [d for _, d in found], t0)


class RandomReservoir(CoverSumm):
    """Reservoir admission by coin flip with probability ``p``.

    The tree is consulted only when the reservoir is smaller than the summary
    or has reached capacity.
    """

    def __init__(
        self,
        k: int = 20,
        p: float = 0.1,
        alpha: float = 0.005,
        c_max: Optional[int] = None,
        gamma: float = 2.0,
        support_width: Optional[float] = None,
        random_state=None,
    ):
        super().__init__(k=k, alpha=alpha, c_max=c_max, variant="reservoir", gamma=gamma, support_width=support_width)
        self.p = p
        self.random_state = random_state

    def _check_params(self) -> None:
        super()._check_params()
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    def _initialize(self, dim: int) -> None:
        super()._initialize(dim)
        self.rng_ = check_random_state(self.random_state)

    def _needs_rebuild(self, drift: float) -> bool:
        n = self.centroid_.count
        return len(self.reservoir_) < min(self.k, n) or len(self.reservoir_) >= self.capacity

    def _maybe_admit(self, point: Point) -> None:
        if self.rng_.random_sample() < self.p:
            d = float(distances(point.vec, self.centroid_.last_query))
            self.reservoir_.add(point.id, d, point.vec)


class DecayLambda(CoverSumm):
    """Rebuild when the drift reaches ``c1 * exp(-c2 * t)`` instead of half the slack."""

    def __init__(
        self,
        k: int = 20,
        c1: float = 1.0,
        c2: float = 1e-3,
        alpha: float = 0.005,
        c_max: Optional[int] = None,
        gamma: float = 2.0,
        support_width: Optional[float] = None,
    ):
        super().__init__(k=k, alpha=alpha, c_max=c_max, variant="reservoir", gamma=gamma, support_width=support_width)
        self.c1 = c1
        self.c2 = c2

    def _check_params(self) -> None:
        super()._check_params()
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")

    def decay_threshold(self, t: int) -> float:
        return self.c1 * math.exp(-self.c2 * t)

    def _needs_rebuild(self, drift: float) -> bool:
        return drift >= self.decay_threshold(self.centroid_.count) or len(self.reservoir_) >= self.capacity


BASELINES = {
    "brute_force": BruteForce,
    "naive_tree": NaiveTree,
    "random_reservoir": RandomReservoir,
    "decay_lambda": DecayLambda,
}
