import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coversumm.vectorspace import (
    BoundParams,
    DimensionMismatch,
    Point,
    RunningCentroid,
    centroid_bound,
    distance,
    distances,
    lambda_threshold,
)

# magnitudes whose squared differences cannot underflow to zero
finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).filter(lambda x: x == 0 or abs(x) > 1e-100)


@pytest.mark.parametrize(
    "a, b, expected",
    [([0, 0], [3, 4], 5.0), ([1], [1], 0.0), ([1, 2, 2], [0, 0, 0], 3.0)],
)
def test_distance_examples(a, b, expected):
    assert distance(a, b) == expected


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        distance([0, 0], [0, 0, 0])
    with pytest.raises(DimensionMismatch):
        distances(np.zeros((3, 2)), np.zeros(3))


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_distance_symmetric_and_zero_iff_equal(a, b):
    assert distance(a, b) == distance(b, a)
    assert (distance(a, b) == 0.0) == bool(np.all(a == b))


@given(arrays(np.float64, (7, 4), elements=finite), arrays(np.float64, 4, elements=finite))
def test_batch_distances_match_pairwise_bitwise(X, q):
    batch = distances(X, q)
    for row, d in zip(X, batch):
        assert distance(row, q) == d


def test_point_rejects_bad_input():
    with pytest.raises(DimensionMismatch):
        Point(1, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Point(-1, np.zeros(2))
    assert Point(3, [1, 2]).dim == 2


@pytest.mark.parametrize(
    "pushes, mean",
    [([[2, 4]], [2, 4]), ([[0, 0], [2, 2]], [1, 1]), ([[1], [2], [6]], [3])],
)
def test_centroid_push_examples(pushes, mean):
    c = RunningCentroid(len(pushes[0]))
    for x in pushes:
        c.push(x)
    assert c.count == len(pushes)
    np.testing.assert_array_equal(c.mean, mean)


def test_centroid_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        RunningCentroid(2).push([1, 2, 3])


def test_streaming_mean_matches_batch_mean():
    X = np.random.default_rng(11).normal(size=(10_000, 6)) * 50
    c = RunningCentroid(6)
    for x in X:
        c.push(x)
    assert np.max(np.abs(c.mean - X.mean(axis=0))) <= 1e-9


@pytest.mark.parametrize(
    "mean, last, expected",
    [([0.0, 0.0], [0.0, 0.0], 0.0), ([1.0, 0.0], [0.0, 0.0], 1.0), ([3.0, 4.0], [0.0, 0.0], 5.0)],
)
def test_drift_examples(mean, last, expected):
    c = RunningCentroid(2)
    c.push(mean)
    c.last_query = np.array(last)
    assert c.drift() == expected


def test_drift_needs_a_query():
    c = RunningCentroid(1).push([1.0])
    with pytest.raises(ValueError):
        c.drift()
    c.mark_query()
    assert c.drift() == 0.0


def test_remove_downdates_and_tracks_count():
    c = RunningCentroid(2)
    for x in ([1, 1], [3, 5], [5, 9]):
        c.push(x)
    c.remove([[5, 9]])
    assert c.count == 2
    np.testing.assert_allclose(c.mean, [2, 3])
    c.remove([[1, 1], [3, 5]])
    assert c.count == 0
    with pytest.raises(ValueError):
        _ = c.mean


def test_support_width_is_twice_max_abs():
    c = RunningCentroid(3).push([0.1, -0.4, 0.2]).push([0.3, 0.0, 0.0])
    assert c.support_width == pytest.approx(0.8)


def test_lambda_examples():
    p = BoundParams(alpha=1.0, dim=1, support_width=1.0)
    assert lambda_threshold(p, 2) == pytest.approx(1.17741, abs=1e-5)
    p = BoundParams(alpha=1.0, dim=4, support_width=2.0)
    assert lambda_threshold(p, 8) == pytest.approx(3.33021, abs=1e-5)
    tiny = BoundParams(alpha=1e-300, dim=100, support_width=1.0)
    assert lambda_threshold(tiny, 5) == pytest.approx(0.0, abs=1e-140)


def test_centroid_bound_examples():
    p = BoundParams(alpha=1.0, dim=1, support_width=1.0)
    assert centroid_bound(p, 2) == pytest.approx(0.58871, abs=1e-5)
    wide = BoundParams(dim=100, support_width=1.0)
    assert centroid_bound(wide, 10**12) < 1e-4


@given(
    dim=st.integers(1, 200),
    b=st.floats(1e-3, 1e3),
    t=st.integers(1, 10**7),
)
def test_centroid_bound_is_half_lambda_at_unit_alpha(dim, b, t):
    p = BoundParams(alpha=1.0, dim=dim, support_width=b)
    assert centroid_bound(p, t) == pytest.approx(lambda_threshold(p, t) / 2, rel=1e-12)


@settings(max_examples=50)
@given(alpha=st.floats(1e-4, 10), dim=st.integers(1, 100), b=st.floats(1e-2, 10))
def test_lambda_strictly_decreasing(alpha, dim, b):
    p = BoundParams(alpha=alpha, dim=dim, support_width=b)
    vals = [lambda_threshold(p, t) for t in range(1, 500)]
    # ln(2t)/t takes the same value at t = 1 and t = 2
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
    assert all(x > y for x, y in zip(vals[1:], vals[2:]))


def test_running_estimate_and_pinned_width():
    p = BoundParams(alpha=1.0, dim=1)
    with pytest.raises(ValueError):
        lambda_threshold(p, 3)
    assert lambda_threshold(p, 2, support_width=1.0) == pytest.approx(math.sqrt(math.log(4)))


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=0.0), dict(alpha=-1.0), dict(dim=0), dict(support_width=0.0)],
)
def test_bound_params_validation(kwargs):
    with pytest.raises(ValueError):
        BoundParams(**kwargs)


def test_delta_schedule_range_is_checked():
    p = BoundParams(delta_schedule=lambda t: 2.0, support_width=1.0)
    with pytest.raises(ValueError):
        lambda_threshold(p, 1)
    with pytest.raises(ValueError):
        lambda_threshold(BoundParams(support_width=1.0), 0)
