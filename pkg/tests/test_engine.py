import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from coversumm.engine import VARIANTS, CoverSumm, ReservoirInvariantError
from coversumm.oracle_metrics import oracle_knn_arrays, oracle_stream
from coversumm.vectorspace import DimensionMismatch, Point, distances


def stream_ids(model, X):
    return [model.step(Point(i + 1, x))[0].member_ids for i, x in enumerate(X)]


@pytest.fixture(scope="module")
def uniform_1000():
    X = np.random.default_rng(2024).random((1000, 8)) - 0.5
    return X, oracle_stream(X, 20)


def test_first_step_bootstraps():
    m = CoverSumm(k=3)
    summary, record = m.step(Point(1, [0.2, 0.4]))
    assert summary.member_ids == [1]
    assert record.did_reservoir_search and record.cumulative_rs == 1


def test_tie_broken_by_id():
    m = CoverSumm(k=1)
    m.step(Point(1, [0.0]))
    summary, _ = m.step(Point(2, [10.0]))
    np.testing.assert_array_equal(m.centroid_.mean, [5.0])
    assert summary.member_ids == [1]


@pytest.mark.parametrize("variant", VARIANTS)
def test_every_step_matches_oracle(variant, uniform_1000):
    X, truth = uniform_1000
    m = CoverSumm(k=20, variant=variant)
    assert stream_ids(m, X) == truth


def test_variants_agree_and_records_are_consistent(uniform_1000):
    X, _ = uniform_1000
    runs = {}
    for variant in VARIANTS:
        m = CoverSumm(k=10, variant=variant, alpha=0.02)
        runs[variant] = (stream_ids(m, X), m.records_)
    ids = [r[0] for r in runs.values()]
    assert ids[0] == ids[1] == ids[2]
    for _, records in runs.values():
        rs = [r.cumulative_rs for r in records]
        assert records[0].did_reservoir_search
        assert all(a <= b for a, b in zip(rs, rs[1:]))
        assert rs[-1] == sum(r.did_reservoir_search for r in records)


@pytest.mark.parametrize("variant", VARIANTS)
def test_reservoir_bounds(variant, uniform_1000):
    X, _ = uniform_1000
    m = CoverSumm(k=10, variant=variant, c_max=40)
    for i, x in enumerate(X):
        _, rec = m.step(Point(i + 1, x))
        assert rec.reservoir_size <= m.capacity
        if rec.did_reservoir_search:
            assert rec.reservoir_size >= min(m.k, i + 1)


def test_lazy_buffers_until_rebuild():
    rng = np.random.default_rng(1)
    m = CoverSumm(k=2, variant="lazy_reservoir", alpha=0.05)
    m.fit(rng.random((200, 3)))
    quiet = 0
    for pid in range(201, 400):
        _, rec = m.step(Point(pid, rng.random(3)))
        if rec.did_reservoir_search:
            assert len(m.tree_) == m.centroid_.count
            quiet = 0
        else:
            quiet += 1
            assert len(m.tree_) == m.centroid_.count - len(m.pending_)
            assert len(m.pending_) >= quiet
    m.flush_pending()
    assert len(m.tree_) == m.centroid_.count and not m.pending_


def test_uncached_points_are_beyond_the_certified_radius():
    rng = np.random.default_rng(8)
    X = rng.random((600, 2))
    m = CoverSumm(k=5, variant="reservoir", alpha=0.05)
    for i, x in enumerate(X):
        summary, rec = m.step(Point(i + 1, x))
        if rec.did_reservoir_search or rec.step < m.k:
            continue
        res = m.reservoir_
        cached = set(res.ids)
        outside = [j for j in range(i + 1) if j + 1 not in cached]
        if not outside:
            continue
        mean = m.centroid_.mean
        d_out = distances(X[outside], mean)
        assert np.all(d_out > res.admit_radius - rec.drift)
        if math.isclose(res.admit_radius, res.d_k + m.lam_) and rec.drift < m.lam_ / 2:
            assert np.all(d_out > res.d_k + m.lam_ / 2)
        assert summary.distances[-1] <= d_out.min()


# ------------------------------------------------------------------ deletion


def live_truth(X, live, k, model=None):
    """Oracle over the survivors, queried at the model's running mean when given."""
    ids = np.array(sorted(live))
    if not len(ids):
        return []
    L = X[ids - 1]
    mean = L.mean(axis=0)
    if model is not None:
        np.testing.assert_allclose(model.centroid_.mean, mean, rtol=0, atol=1e-12)
        mean = model.centroid_.mean
    return oracle_knn_arrays(ids, L, mean, k)


@pytest.mark.parametrize("variant", VARIANTS)
def test_delete_top_member(variant):
    X = np.random.default_rng(4).random((300, 4))
    m = CoverSumm(k=5, variant=variant).fit(X)
    live = set(range(1, 301))
    top = m.summary_.member_ids[0]
    summary = m.delete_batch([top])
    live.discard(top)
    assert summary.member_ids == live_truth(X, live, 5, m)


def test_delete_far_points_skips_rebuild():
    rng = np.random.default_rng(6)
    X = rng.random((400, 3))
    m = CoverSumm(k=5, variant="reservoir", alpha=0.05).fit(X)
    before = list(m.summary_.member_ids)
    searches = m.n_reservoir_searches_
    far = np.argsort(-distances(X, m.centroid_.mean))[:1] + 1
    assert not set(far.tolist()) & set(m.reservoir_.ids)
    summary = m.delete_batch(far.tolist())
    assert m.n_reservoir_searches_ == searches
    assert summary.member_ids == before


def test_delete_down_to_one_and_to_none():
    X = np.random.default_rng(9).random((30, 2))
    m = CoverSumm(k=4).fit(X)
    assert m.delete_batch(range(1, 30)).member_ids == [30]
    assert m.delete_batch([30]).member_ids == []
    assert m.n_points == 0


def test_delete_errors():
    m = CoverSumm(k=2).fit(np.eye(3))
    with pytest.raises(KeyError):
        m.delete_batch([99])
    with pytest.raises(NotFittedError):
        CoverSumm().delete_batch([1])


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**16),
    variant=st.sampled_from(VARIANTS),
    k=st.integers(1, 6),
    ops=st.lists(st.integers(0, 9), min_size=20, max_size=120),
)
def test_random_insert_delete_matches_oracle(seed, variant, k, ops):
    rng = np.random.default_rng(seed)
    X = np.round(rng.random((len(ops), 2)) * 4) / 4  # coarse grid forces ties and duplicates
    m = CoverSumm(k=k, variant=variant, alpha=0.01)
    live = []
    for i, op in enumerate(ops):
        pid = i + 1
        summary, _ = m.step(Point(pid, X[i]))
        live.append(pid)
        assert summary.member_ids == live_truth(X, live, k, m)
        if op < 3 and len(live) > 1:
            doomed = [live.pop(int(rng.integers(len(live)))) for _ in range(min(1 + op, len(live)))]
            summary = m.delete_batch(doomed)
            assert summary.member_ids == live_truth(X, live, k, m)


def test_arrival_refills_a_cache_shrunk_by_deletion():
    # deleting down to n < k leaves a finite admission radius; the next arrival
    # may fall outside it while the summary now needs every live point
    ops = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 3, 3, 0, 0, 0, 0, 0, 0, 0]
    rng = np.random.default_rng(0)
    X = np.round(rng.random((len(ops), 2)) * 4) / 4
    m = CoverSumm(k=4, variant="reservoir", alpha=0.01)
    live = []
    for i, op in enumerate(ops):
        summary, _ = m.step(Point(i + 1, X[i]))
        live.append(i + 1)
        assert summary.member_ids == live_truth(X, live, 4, m)
        if op < 3 and len(live) > 1:
            doomed = [live.pop(int(rng.integers(len(live)))) for _ in range(min(1 + op, len(live)))]
            assert m.delete_batch(doomed).member_ids == live_truth(X, live, 4, m)


# ------------------------------------------------------- summary from cache


def _primed(k):
    m = CoverSumm(k=k).fit([[0.0]])
    return m


def test_summary_from_reservoir_examples():
    m = _primed(1)
    m.reservoir_.reset([10, 11], [0.5, 0.2], np.array([[0.5], [0.2]]))
    assert m.summary_from_reservoir().member_ids == [11]
    m = _primed(5)
    m.reservoir_.reset([10, 11], [0.5, 0.2], np.array([[0.5], [0.2]]))
    assert m.summary_from_reservoir().member_ids == [11, 10]


def test_summary_from_reservoir_scans_the_cache():
    rng = np.random.default_rng(0)
    m = _primed(7)
    V = rng.normal(size=(50, 1))
    ids = list(range(100, 150))
    m.reservoir_.reset(ids, [0.0] * 50, V)
    assert m.summary_from_reservoir().member_ids == oracle_knn_arrays(ids, V, m.centroid_.mean, 7)


def test_underpopulated_reservoir_is_a_bug():
    m = _primed(1)
    m.reservoir_.reset([], [], np.empty((0, 1)))
    with pytest.raises(ReservoirInvariantError):
        m.summary_from_reservoir()


# ------------------------------------------------------------- estimator API


@pytest.mark.parametrize(
    "params",
    [dict(k=0), dict(k=2.5), dict(k=5, c_max=5), dict(variant="eager"), dict(alpha=0.0), dict(gamma=1.0)],
)
def test_rejects_bad_params(params):
    with pytest.raises(ValueError):
        CoverSumm(**params).fit(np.ones((3, 2)))


def test_rejects_bad_arrivals():
    m = CoverSumm(k=2)
    m.step(Point(5, [0.0, 1.0]))
    with pytest.raises(DimensionMismatch):
        m.step(Point(6, [0.0]))
    with pytest.raises(ValueError):
        m.step(Point(5, [1.0, 1.0]))


def test_sklearn_surface():
    X = np.random.default_rng(1).random((50, 3))
    m = CoverSumm(k=4, alpha=0.1)
    assert m.get_params()["k"] == 4
    assert clone(m).set_params(k=6).k == 6
    out = CoverSumm(k=4).transform(X[:3])
    np.testing.assert_array_equal(out[0], [1, -1, -1, -1])
    assert sorted(out[2][:3]) == [1, 2, 3]
    ids = m.fit(X).predict()
    assert ids == oracle_knn_arrays(np.arange(1, 51), X, X.mean(axis=0), 4)
    m.partial_fit(X[:5])
    assert m.last_id_ == 55
    assert m.predict(X[5:6]) == m.summary_.member_ids


def test_texts_follow_the_summary():
    m = CoverSumm(k=2).fit([[0.0], [1.0], [5.0]], texts=["a", "b", "c"])
    assert m.summary_texts() == ["b", "a"]
