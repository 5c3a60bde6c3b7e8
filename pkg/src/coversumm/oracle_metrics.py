"""Brute-force ground truth, step-wise accuracy and bound-violation statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .base import select_k
from .vectorspace import BoundParams, Point, distances

__all__ = [
    "AccuracyReport",
    "oracle_knn",
    "oracle_knn_arrays",
    "oracle_stream",
    "nn_accuracy",
    "bound_violation_rate",
    "sample_pairs",
]


def oracle_knn_arrays(ids: Sequence[int], X: np.ndarray, q, k: int) -> List[int]:
    """Ids of the ``min(k, n)`` rows of ``X`` nearest ``q``, ties broken by id."""
    if len(ids) == 0:
        return []
    X = np.asarray(X, dtype=np.float64)
    return select_k(ids, distances(X, q), k)[0]


def oracle_knn(points: Sequence[Point], q, k: int) -> List[int]:
    """Full scan over ``points``; ascending ``(distance, id)``."""
    if not points:
        return []
    return oracle_knn_arrays([p.id for p in points], np.stack([p.vec for p in points]), q, k)


def oracle_stream(X: np.ndarray, k: int, ids: Optional[Sequence[int]] = None) -> List[List[int]]:
    """Per-step oracle summaries of the running mean over the prefix ``X[:t]``.

    The mean is accumulated left to right exactly as the summarizers do.
    """
    X = np.asarray(X, dtype=np.float64)
    ids = np.arange(1, X.shape[0] + 1) if ids is None else np.asarray(ids)
    acc = np.zeros(X.shape[1])
    out = []
    for t in range(1, X.shape[0] + 1):
        acc += X[t - 1]
        out.append(oracle_knn_arrays(ids[:t], X[:t], acc / t, k))
    return out


@dataclass
class AccuracyReport:
    steps_total: int
    steps_exact: int
    first_mismatch_step: Optional[int] = None

    @property
    def accuracy_pct(self) -> float:
        if self.steps_total == 0:
            return 100.0
        return 100.0 * self.steps_exact / self.steps_total

    def as_dict(self) -> dict:
        return {
            "steps_total": self.steps_total,
            "steps_exact": self.steps_exact,
            "accuracy_pct": self.accuracy_pct,
            "first_mismatch_step": self.first_mismatch_step,
        }


def nn_accuracy(candidate: Sequence[Sequence[int]], truth: Sequence[Sequence[int]]) -> AccuracyReport:
    """Share of steps whose ordered id list matches the truth exactly.

    Steps are numbered from 1 in ``first_mismatch_step``.
    """
    if len(candidate) != len(truth):
        raise ValueError(f"stream lengths differ: {len(candidate)} != {len(truth)}")
    exact = 0
    first = None
    for step, (a, b) in enumerate(zip(candidate, truth), start=1):
        if list(a) == list(b):
            exact += 1
        elif first is None:
            first = step
    return AccuracyReport(steps_total=len(truth), steps_exact=exact, first_mismatch_step=first)


def sample_pairs(n: int) -> List[tuple]:
    """``(t, t + i)`` pairs with t on powers of two and i in {1, t/2, t}."""
    pairs = []
    t = 1
    while t < n:
        for i in sorted({1, max(1, t // 2), t}):
            if t + i <= n:
                pairs.append((t, t + i))
        t *= 2
    return pairs


def bound_violation_rate(X: np.ndarray, params: Optional[BoundParams] = None, horizon: Optional[int] = None) -> float:
    """Fraction of sampled pairs with ``d(mu_t, mu_{t+i}) > sqrt(2 D b**2 ln(2t) / t)``.

    ``b`` is ``params.support_width`` when set, otherwise twice the largest
    absolute coordinate of the stream. ``alpha`` is ignored (taken as 1).
    """
    X = np.asarray(X, dtype=np.float64)
    if horizon is not None:
        X = X[:horizon]
    n, dim = X.shape
    if params is not None and params.support_width is not None:
        b = float(params.support_width)
    else:
        b = 2.0 * float(np.max(np.abs(X))) if n else 0.0
    pairs = sample_pairs(n)
    if not pairs:
        return 0.0
    means = np.cumsum(X, axis=0) / np.arange(1, n + 1)[:, None]
    bad = 0
    for t, u in pairs:
        bound = math.sqrt(2.0 * dim * b * b * math.log(2.0 * t) / t)
        if float(distances(means[u - 1][None, :], means[t - 1])[0]) > bound:
            bad += 1
    return bad / len(pairs)
