"""Partition sequences, reduced-partition compatibility and CRF bookkeeping.

Participants carry a dish label per period; the within-period partition is
the grouping of participants by dish. Chinese-restaurant-franchise counts are
kept per (period, dish): ``customers[j, d]`` participants and ``tables[j, d]``
tables. A participant joining a dish already served in its period sits at
the existing (largest) table, so ``tables[j, d]`` is 1 exactly when the dish
is served in period ``j``. Only the global table counts enter the predictive
weights.

For non-hierarchical variants every dish is owned by one period and is never
offered in another, which degenerates the franchise into independent
per-period restaurants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "PartitionSequence",
    "canonical",
    "reduced_partition",
    "is_compatible",
    "crf_predictive_logweights",
    "remove_participant",
    "apply_assignment",
]


def canonical(labels) -> np.ndarray:
    """Relabel by order of first appearance, starting from 0."""
    labels = np.asarray(labels)
    out = np.empty(labels.shape, dtype=np.int64)
    seen: dict = {}
    for k, lab in enumerate(labels.ravel().tolist()):
        if lab not in seen:
            seen[lab] = len(seen)
        out.flat[k] = seen[lab]
    return out


def reduced_partition(rho, members) -> np.ndarray:
    """Restriction of the partition ``rho`` to the items in ``members``.

    Items are kept in increasing index order and the result is canonically
    relabelled, so equal set partitions give equal arrays.
    """
    rho = np.asarray(rho)
    idx = np.array(sorted(set(int(k) for k in members)), dtype=np.int64)
    if idx.size == 0:
        return np.empty(0, dtype=np.int64)
    return canonical(rho[idx])


def is_compatible(rho_prev, rho_curr, members) -> bool:
    """True when both partitions agree as set partitions on ``members``."""
    return bool(np.array_equal(reduced_partition(rho_prev, members), reduced_partition(rho_curr, members)))


@dataclass
class PartitionSequence:
    """Dish labels, fixed/flexible flags and CRF counts for all periods.

    ``labels[j, i]`` is the dish slot of participant ``i`` in period ``j``
    (``-1`` while the participant is removed for an update). ``gamma[j, i]``
    is 1 when participant ``i`` is fixed across the transition into period
    ``j``; row 0 is unused.
    """

    labels: np.ndarray
    gamma: np.ndarray
    customers: np.ndarray
    tables: np.ndarray
    dish_tables: np.ndarray
    dish_size: np.ndarray
    owner: np.ndarray
    hierarchical: bool

    @classmethod
    def single_cluster(cls, N: int, J: int, capacity: int, hierarchical: bool) -> "PartitionSequence":
        """Everyone in one cluster per period (one shared dish if hierarchical)."""
        if capacity < J + 1:
            raise ValueError("dish capacity too small")
        ps = cls(
            labels=np.full((J, N), -1, dtype=np.int64),
            gamma=np.zeros((J, N), dtype=np.int64),
            customers=np.zeros((J, capacity), dtype=np.int64),
            tables=np.zeros((J, capacity), dtype=np.int64),
            dish_tables=np.zeros(capacity, dtype=np.int64),
            dish_size=np.zeros(capacity, dtype=np.int64),
            owner=np.full(capacity, -1, dtype=np.int64),
            hierarchical=bool(hierarchical),
        )
        for j in range(J):
            for i in range(N):
                apply_assignment(i, j, 0 if hierarchical else j, ps)
        return ps

    @classmethod
    def from_labels(cls, labels, capacity: int | None = None, hierarchical: bool = True, gamma=None):
        """Build counts from a (J, N) label array; labels are mapped to slots canonically."""
        labels = np.asarray(labels)
        J, N = labels.shape
        if hierarchical:
            lab = canonical(labels)
        else:
            lab = np.empty_like(labels, dtype=np.int64)
            offset = 0
            for j in range(J):
                lab[j] = canonical(labels[j]) + offset
                offset = lab[j].max() + 1
        cap = capacity if capacity is not None else N * J + 4
        ps = cls(
            labels=np.full((J, N), -1, dtype=np.int64),
            gamma=np.zeros((J, N), dtype=np.int64) if gamma is None else np.asarray(gamma, dtype=np.int64).copy(),
            customers=np.zeros((J, cap), dtype=np.int64),
            tables=np.zeros((J, cap), dtype=np.int64),
            dish_tables=np.zeros(cap, dtype=np.int64),
            dish_size=np.zeros(cap, dtype=np.int64),
            owner=np.full(cap, -1, dtype=np.int64),
            hierarchical=bool(hierarchical),
        )
        for j in range(J):
            for i in range(N):
                apply_assignment(i, j, int(lab[j, i]), ps)
        return ps

    @property
    def J(self) -> int:
        return self.labels.shape[0]

    @property
    def N(self) -> int:
        return self.labels.shape[1]

    @property
    def capacity(self) -> int:
        return self.dish_size.shape[0]

    @property
    def n_dishes(self) -> int:
        return int(np.count_nonzero(self.dish_size))

    @property
    def total_tables(self) -> int:
        return int(self.dish_tables.sum())

    def partition(self, j: int) -> np.ndarray:
        return canonical(self.labels[j])

    def n_clusters(self, j: int) -> int:
        return int(np.unique(self.labels[j]).size)

    def fixed(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.gamma[j] == 1)

    def arrays(self) -> tuple:
        return (self.labels, self.gamma, self.customers, self.tables, self.dish_tables, self.dish_size, self.owner)

    def copy(self) -> "PartitionSequence":
        return PartitionSequence(*(a.copy() for a in self.arrays()), hierarchical=self.hierarchical)

    def canonical_labels(self) -> tuple[np.ndarray, np.ndarray]:
        """Labels relabelled by first appearance over (j, i), plus slot of each label."""
        flat = self.labels.ravel()
        _, first = np.unique(flat, return_index=True)
        slots = flat[np.sort(first)]
        remap = np.full(self.capacity, -1, dtype=np.int64)
        remap[slots] = np.arange(slots.size)
        return remap[self.labels], slots

    def check(self) -> None:
        """Raise AssertionError if any bookkeeping or compatibility invariant fails."""
        J, N = self.labels.shape
        assert np.all(self.labels >= 0), "participant left unassigned"
        cust = np.zeros_like(self.customers)
        for j in range(J):
            np.add.at(cust[j], self.labels[j], 1)
        assert np.array_equal(cust, self.customers), "customer counts out of sync"
        assert np.all(self.customers.sum(axis=1) == N), "occupancy does not sum to N"
        assert np.array_equal(self.tables, (self.customers > 0).astype(np.int64)), "table counts out of sync"
        assert np.array_equal(self.dish_tables, self.tables.sum(axis=0)), "dish table totals out of sync"
        assert np.array_equal(self.dish_size, self.customers.sum(axis=0)), "dish sizes out of sync"
        assert self.dish_tables.sum() == self.tables.sum()
        if not self.hierarchical:
            served = (self.customers > 0).sum(axis=0)
            assert np.all(served <= 1), "dish shared across periods in a non-hierarchical model"
            for d in np.flatnonzero(self.dish_size):
                assert self.customers[self.owner[d], d] == self.dish_size[d], "dish owner mismatch"
        for j in range(1, J):
            fixed = self.fixed(j)
            assert is_compatible(self.labels[j - 1], self.labels[j], fixed), f"incompatible partitions at period {j}"

    def to_dict(self) -> dict:
        return {
            "labels": self.labels.tolist(),
            "gamma": self.gamma.tolist(),
            "capacity": self.capacity,
            "hierarchical": self.hierarchical,
            "owner": self.owner.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PartitionSequence":
        labels = np.asarray(data["labels"], dtype=np.int64)
        J, N = labels.shape
        cap = int(data["capacity"])
        ps = cls(
            labels=np.full((J, N), -1, dtype=np.int64),
            gamma=np.asarray(data["gamma"], dtype=np.int64),
            customers=np.zeros((J, cap), dtype=np.int64),
            tables=np.zeros((J, cap), dtype=np.int64),
            dish_tables=np.zeros(cap, dtype=np.int64),
            dish_size=np.zeros(cap, dtype=np.int64),
            owner=np.full(cap, -1, dtype=np.int64),
            hierarchical=bool(data["hierarchical"]),
        )
        for j in range(J):
            for i in range(N):
                _add(i, j, labels[j, i], *ps.arrays())
        ps.owner[:] = np.asarray(data["owner"], dtype=np.int64)
        return ps

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartitionSequence):
            return NotImplemented
        return self.hierarchical == other.hierarchical and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


# ---------------------------------------------------------------------------
# compiled bookkeeping kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _remove(i, j, labels, gamma, customers, tables, dish_tables, dish_size, owner):
    d = labels[j, i]
    if d < 0:
        return
    labels[j, i] = -1
    customers[j, d] -= 1
    dish_size[d] -= 1
    if customers[j, d] == 0:
        tables[j, d] = 0
        dish_tables[d] -= 1
    if dish_size[d] == 0:
        owner[d] = -1


@numba.njit(cache=True)
def _add(i, j, d, labels, gamma, customers, tables, dish_tables, dish_size, owner):
    labels[j, i] = d
    if customers[j, d] == 0:
        tables[j, d] = 1
        dish_tables[d] += 1
    customers[j, d] += 1
    if dish_size[d] == 0:
        owner[d] = j
    dish_size[d] += 1


@numba.njit(cache=True)
def crf_prior_logweights(j, customers, dish_tables, dish_size, hierarchical, alpha, alpha0, n_aux, cand, logw):
    """Fill ``cand``/``logw`` with the existing dishes on offer in period ``j``.

    Returns ``(K, fresh_logw)``: the number of existing candidates written and
    the log prior weight of each of the ``n_aux`` auxiliary fresh dishes.
    """
    K = 0
    if hierarchical:
        mtot = 0
        for d in range(dish_tables.shape[0]):
            mtot += dish_tables[d]
        denom = mtot + alpha0
        for d in range(dish_size.shape[0]):
            if dish_size[d] > 0:
                cand[K] = d
                logw[K] = math.log(customers[j, d] + alpha * dish_tables[d] / denom)
                K += 1
        fresh = math.log(alpha * alpha0 / (denom * n_aux))
    else:
        for d in range(dish_size.shape[0]):
            if customers[j, d] > 0:
                cand[K] = d
                logw[K] = math.log(customers[j, d])
                K += 1
        fresh = math.log(alpha / n_aux)
    return K, fresh


def remove_participant(i: int, j: int, ps: PartitionSequence) -> PartitionSequence:
    """Take participant ``i`` out of period ``j``'s bookkeeping."""
    _remove(i, j, *ps.arrays())
    return ps


def apply_assignment(i: int, j: int, dish: int, ps: PartitionSequence) -> PartitionSequence:
    """Seat participant ``i`` of period ``j`` at ``dish``, moving it if already seated.

    Emptied tables and dishes are released; a previously empty slot becomes a
    freshly minted dish.
    """
    if not 0 <= dish < ps.capacity:
        raise ValueError(f"dish slot {dish} out of range")
    if not ps.hierarchical and ps.dish_size[dish] > 0 and ps.owner[dish] != j and ps.labels[j, i] != dish:
        raise ValueError(f"dish {dish} belongs to period {ps.owner[dish]} in a non-hierarchical model")
    _remove(i, j, *ps.arrays())
    _add(i, j, dish, *ps.arrays())
    return ps


def crf_predictive_logweights(i: int, j: int, ps: PartitionSequence, alpha: float, alpha0: float | None, n_aux: int = 3):
    """Prior log-weights for where removed participant ``i`` of period ``j`` goes.

    Existing dish ``d`` gets ``n_jd + alpha * m_d / (m + alpha0)`` (hierarchical)
    or ``n_jd`` (non-hierarchical, dishes of period ``j`` only); each of the
    ``n_aux`` auxiliary fresh dishes gets ``alpha * alpha0 / ((m + alpha0) * n_aux)``
    or ``alpha / n_aux``. Here ``n_jd`` counts period-``j`` customers of ``d``,
    ``m_d`` its tables over all periods and ``m`` all tables.

    Returns ``(dishes, log_weights)``; fresh dishes are reported as ``-1``.
    """
    if ps.labels[j, i] != -1:
        raise ValueError(f"participant {i} must be removed from period {j} first")
    if ps.hierarchical and not alpha0:
        raise ValueError("hierarchical weights need alpha0 > 0")
    cand = np.empty(ps.capacity, dtype=np.int64)
    logw = np.empty(ps.capacity)
    K, fresh = crf_prior_logweights(
        j, ps.customers, ps.dish_tables, ps.dish_size, ps.hierarchical, float(alpha), float(alpha0 or 0.0), n_aux, cand, logw
    )
    dishes = np.concatenate([cand[:K], np.full(n_aux, -1, dtype=np.int64)])
    weights = np.concatenate([logw[:K], np.full(n_aux, fresh)])
    return dishes, weights
