import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htrpm.partition import (
    PartitionSequence,
    apply_assignment,
    canonical,
    crf_predictive_logweights,
    is_compatible,
    reduced_partition,
    remove_participant,
)


def test_reduced_partition_example():
    rho = [0, 0, 1, 1, 2]
    np.testing.assert_array_equal(reduced_partition(rho, [0, 2, 4]), [0, 1, 2])
    np.testing.assert_array_equal(reduced_partition(rho, [0, 1, 3]), [0, 0, 1])
    assert reduced_partition(rho, []).size == 0


def test_compatibility_examples():
    prev = [0, 0, 1, 1]
    # same grouping under different names is compatible
    assert is_compatible(prev, [5, 5, 2, 7], [0, 1, 2])
    # splitting 0 and 1 is not
    assert not is_compatible(prev, [0, 1, 1, 1], [0, 1])
    # merging 1 and 2 is not
    assert not is_compatible(prev, [0, 1, 1, 2], [1, 2])
    # nobody fixed: anything goes
    assert is_compatible(prev, [3, 2, 1, 0], [])


def test_canonical_first_appearance():
    np.testing.assert_array_equal(canonical([7, 3, 7, 9]), [0, 1, 0, 2])


def test_crp_weights_non_hierarchical():
    # period 0 partition {0,1},{2}; remove participant 2 -> only the table of size 2 plus fresh
    ps = PartitionSequence.from_labels([[0, 0, 1]], hierarchical=False)
    remove_participant(2, 0, ps)
    dishes, lw = crf_predictive_logweights(2, 0, ps, alpha=1.0, alpha0=None, n_aux=1)
    p = np.exp(lw) / np.exp(lw).sum()
    # join {0,1} with 2/(2+1), new table with 1/(2+1)
    np.testing.assert_allclose(p, [2 / 3, 1 / 3])
    assert dishes[-1] == -1


def test_crf_weights_hierarchical_enumeration():
    # periods share dish 0; period 1 also has dish 1
    labels = [[0, 0, 0], [0, 1, 1]]
    ps = PartitionSequence.from_labels(labels, hierarchical=True)
    remove_participant(0, 1, ps)
    alpha, alpha0, n_aux = 0.5, 2.0, 2
    dishes, lw = crf_predictive_logweights(0, 1, ps, alpha, alpha0, n_aux=n_aux)
    # after removal: tables m_0 = 1 (period 0 only), m_1 = 1, m = 2
    # period-1 customers: n_10 = 0, n_11 = 2
    m = 2
    expect = {
        0: 0 + alpha * 1 / (m + alpha0),
        1: 2 + alpha * 1 / (m + alpha0),
    }
    fresh = alpha * alpha0 / (m + alpha0) / n_aux
    w = np.exp(lw)
    for d, v in expect.items():
        assert w[list(dishes).index(d)] == pytest.approx(v)
    np.testing.assert_allclose(w[dishes == -1], fresh)
    # normalising constant is n_j + alpha
    assert w.sum() == pytest.approx(2 + alpha)


def test_non_hierarchical_never_offers_other_periods():
    ps = PartitionSequence.from_labels([[0, 0], [0, 1]], hierarchical=False)
    remove_participant(0, 1, ps)
    dishes, _ = crf_predictive_logweights(0, 1, ps, 1.0, None)
    owned = {d for d in dishes if d >= 0}
    assert all(ps.owner[d] == 1 for d in owned)
    with pytest.raises(ValueError):
        apply_assignment(0, 1, int(ps.labels[0, 0]), ps)


def test_must_remove_first():
    ps = PartitionSequence.single_cluster(3, 2, capacity=10, hierarchical=True)
    with pytest.raises(ValueError):
        crf_predictive_logweights(0, 0, ps, 1.0, 1.0)
    remove_participant(0, 0, ps)
    with pytest.raises(ValueError):
        crf_predictive_logweights(0, 0, ps, 1.0, None)


def test_single_cluster_counts():
    ps = PartitionSequence.single_cluster(4, 3, capacity=20, hierarchical=True)
    ps.check()
    assert ps.n_dishes == 1 and ps.total_tables == 3
    ps = PartitionSequence.single_cluster(4, 3, capacity=20, hierarchical=False)
    ps.check()
    assert ps.n_dishes == 3


def test_check_detects_incompatibility():
    ps = PartitionSequence.from_labels([[0, 0, 1], [0, 1, 1]], gamma=[[0, 0, 0], [0, 0, 0]])
    ps.check()
    ps.gamma[1, :2] = 1
    with pytest.raises(AssertionError):
        ps.check()


def test_dict_roundtrip():
    ps = PartitionSequence.from_labels([[0, 1, 1], [2, 1, 0]], gamma=[[0, 0, 0], [0, 1, 0]], hierarchical=True)
    assert PartitionSequence.from_dict(ps.to_dict()) == ps


labels_strategy = st.integers(1, 4).flatmap(
    lambda J: st.integers(1, 6).flatmap(
        lambda N: st.lists(st.lists(st.integers(0, 3), min_size=N, max_size=N), min_size=J, max_size=J)
    )
)


@settings(max_examples=60, deadline=None)
@given(labels_strategy, st.booleans(), st.data())
def test_move_and_back_is_identity(labels, hierarchical, data):
    ps = PartitionSequence.from_labels(labels, hierarchical=hierarchical)
    ps.check()
    before = ps.copy()
    J, N = ps.labels.shape
    j = data.draw(st.integers(0, J - 1))
    i = data.draw(st.integers(0, N - 1))
    old = int(ps.labels[j, i])
    free = int(np.flatnonzero(ps.dish_size == 0)[0])
    apply_assignment(i, j, free, ps)
    ps.check()
    assert ps.customers[j].sum() == N
    apply_assignment(i, j, old, ps)
    ps.check()
    assert ps == before


@settings(max_examples=60, deadline=None)
@given(labels_strategy, st.floats(0.05, 5), st.floats(0.05, 5))
def test_predictive_normaliser(labels, alpha, alpha0):
    ps = PartitionSequence.from_labels(labels, hierarchical=True)
    J, N = ps.labels.shape
    remove_participant(0, J - 1, ps)
    _, lw = crf_predictive_logweights(0, J - 1, ps, alpha, alpha0)
    assert np.exp(lw).sum() == pytest.approx(N - 1 + alpha)
