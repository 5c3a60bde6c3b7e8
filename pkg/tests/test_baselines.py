import numpy as np
import pytest

from coversumm.baselines import (
    BASELINES,
    BruteForce,
    DecayLambda,
    NaiveTree,
    RandomReservoir,
)
from coversumm.engine import CoverSumm
from coversumm.oracle_metrics import oracle_stream
from coversumm.vectorspace import Point


def run(model, X, ids=None):
    ids = range(1, len(X) + 1) if ids is None else ids
    return [model.step(Point(pid, x))[0] for pid, x in zip(ids, X)]


@pytest.fixture(scope="module")
def stream():
    X = np.random.default_rng(77).random((1000, 5))
    return X, oracle_stream(X, 10)


def test_brute_force_examples():
    out = run(BruteForce(k=2), np.array([[0.0], [1.0], [3.0]]), ids=[0, 1, 3])
    assert out[0].member_ids == [0]
    assert out[2].member_ids == [1, 0]
    assert out[2].distances == pytest.approx([1 / 3, 4 / 3])


def test_exact_baselines_agree_with_oracle_and_engine(stream):
    X, truth = stream
    brute = [s.member_ids for s in run(BruteForce(k=10), X)]
    naive = NaiveTree(k=10)
    tree = [s.member_ids for s in run(naive, X)]
    engine = [s.member_ids for s in run(CoverSumm(k=10), X)]
    assert brute == truth
    assert tree == truth
    assert engine == truth
    assert naive.n_queries_ == len(X)


def test_naive_tree_single_step():
    assert run(NaiveTree(k=3), np.array([[1.0, 2.0]]))[0].member_ids == [1]


def test_brute_force_deletion():
    X = np.random.default_rng(3).random((100, 3))
    b = BruteForce(k=4).fit(X)
    summary = b.delete_batch([1, 2, 3, *b.summary_.member_ids[:1]])
    live = b.live_ids()
    assert len(live) == 96
    L = X[np.array(live) - 1]
    d = np.linalg.norm(L - b.centroid_.mean, axis=1)
    assert summary.member_ids == [live[i] for i in np.lexsort((live, d))[:4]]
    with pytest.raises(KeyError):
        b.delete_batch([1])


def test_random_with_p_one_is_exact(stream):
    X, truth = stream
    m = RandomReservoir(k=10, p=1.0, c_max=10**9, random_state=0)
    assert [s.member_ids for s in run(m, X)] == truth
    # the cache is refilled from the tree only while it is smaller than k
    assert m.n_reservoir_searches_ == 10


def test_random_with_p_zero_stays_well_formed(stream):
    X, _ = stream
    m = RandomReservoir(k=10, p=0.0, random_state=0)
    for t, s in enumerate(run(m, X[:200]), start=1):
        assert len(s) == min(10, t)
        assert s.distances == sorted(s.distances)
    assert m.n_reservoir_searches_ > 1


def test_random_is_seeded(stream):
    X, _ = stream
    a = [s.member_ids for s in run(RandomReservoir(k=10, random_state=5), X[:300])]
    b = [s.member_ids for s in run(RandomReservoir(k=10, random_state=5), X[:300])]
    assert a == b


def test_decay_with_huge_c1_never_rebuilds(stream):
    X, _ = stream
    m = DecayLambda(k=10, c1=1e300, c_max=10**9)
    out = run(m, X[:300])
    assert m.n_reservoir_searches_ == 1
    assert all(len(s) == min(10, t) for t, s in enumerate(out, start=1))


def test_decay_with_zero_threshold_rebuilds_every_step(stream):
    X, truth = stream
    m = DecayLambda(k=10, c1=0.0, c2=0.0)
    assert [s.member_ids for s in run(m, X)] == truth
    assert m.n_reservoir_searches_ == len(X)


def test_decay_threshold_formula():
    assert DecayLambda(c1=2.0, c2=0.5).decay_threshold(4) == pytest.approx(2.0 * np.exp(-2.0))


@pytest.mark.parametrize("model", [RandomReservoir(p=1.5), RandomReservoir(p=-0.1), DecayLambda(c1=-1.0)])
def test_approximate_param_validation(model):
    with pytest.raises(ValueError):
        model.fit(np.ones((2, 2)))


def test_registry_names():
    assert set(BASELINES) == {"brute_force", "naive_tree", "random_reservoir", "decay_lambda"}
