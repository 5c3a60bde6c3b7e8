"""Result types and the sklearn-style streaming facade shared by all summarizers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .vectorspace import Point

__all__ = ["Summary", "StepRecord", "StreamSummarizerMixin", "select_k"]


@dataclass
class Summary:
    """Summary after one step: ids ascending by ``(distance to mean, id)``."""

    step: int
    member_ids: List[int]
    distances: List[float]
    changed: bool = True

    def __len__(self):
        return len(self.member_ids)


@dataclass
class StepRecord:
    step: int
    elapsed_ns: int
    did_reservoir_search: bool
    cumulative_rs: int
    reservoir_size: int
    drift: float
    lam: float
    summary: Summary


def select_k(ids: Sequence[int], dists: np.ndarray, k: int) -> Tuple[List[int], List[float]]:
    """The k smallest entries under the ``(distance, id)`` order."""
    ids = np.asarray(ids)
    n = len(ids)
    if n == 0:
        return [], []
    if n > 4 * k:
        kth = np.partition(dists, k - 1)[k - 1]
        cand = np.nonzero(dists <= kth)[0]
    else:
        cand = np.arange(n)
    order = cand[np.lexsort((ids[cand], dists[cand]))][:k]
    return ids[order].tolist(), dists[order].tolist()


class StreamSummarizerMixin:
    """fit / partial_fit / transform / predict on top of a ``step(point)`` method.

    Rows of ``X`` are streamed in order. Unless ``ids`` is given, arrivals are
    numbered 1, 2, ... continuing after the last id seen.
    """

    _fitted_attr = "centroid_"

    def reset(self):
        if hasattr(self, self._fitted_attr):
            delattr(self, self._fitted_attr)
        return self

    def fit(self, X, y=None, ids=None, texts=None):
        """Stream every row of ``X`` from a fresh state."""
        self.reset()
        return self.partial_fit(X, ids=ids, texts=texts)

    def partial_fit(self, X, y=None, ids=None, texts=None):
        """Stream the rows of ``X`` after whatever has been seen so far."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        for point in self._points(X, ids, texts):
            self.step(point)
        return self

    def transform(self, X) -> np.ndarray:
        """Stream ``X`` and return the summary ids after each row (-1 padded)."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        out = np.full((X.shape[0], self.k), -1, dtype=np.int64)
        for i, point in enumerate(self._points(X, None, None)):
            summary, _ = self.step(point)
            out[i, : len(summary)] = summary.member_ids
        return out

    def predict(self, X=None) -> List[int]:
        """Ids of the current summary; with ``X``, stream it first."""
        if X is not None:
            self.partial_fit(X)
        check_is_fitted(self, self._fitted_attr)
        return list(self.summary_.member_ids)

    def _points(self, X: np.ndarray, ids, texts) -> Iterable[Point]:
        start = self.last_id_ + 1 if hasattr(self, self._fitted_attr) else 1
        if ids is None:
            ids = range(start, start + X.shape[0])
        for i, (pid, row) in enumerate(zip(ids, X)):
            yield Point(int(pid), row, None if texts is None else texts[i])

    def run(self, points: Iterable[Point]) -> List[StepRecord]:
        """Stream ``points`` and return their step records."""
        return [self.step(p)[1] for p in points]
