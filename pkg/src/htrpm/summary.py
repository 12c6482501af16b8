"""Posterior summaries of a chain archive.

Point partitions minimise the posterior expected lower bound of the variation
of information (natural log) given pairwise co-clustering probabilities
``p``. Up to terms that do not depend on the candidate partition ``c``, the
loss is

    L(c) = sum_k n_k log n_k - 2 sum_i log b_i,    b_i = sum_{j in c(i)} p_ij,

which the search below evaluates incrementally.
"""
from __future__ import annotations

import math

import numba
import numpy as np
from scipy.special import logsumexp

from .chain import ChainArchive
from .metrics import adjusted_rand_index, gamma_accuracy, mse_smooth, variation_of_information
from .partition import canonical
from .spline import build_basis, design_matrix, local_rows

__all__ = [
    "coclustering",
    "expected_vi_lower_bound",
    "salso",
    "estimate_partition",
    "waic",
    "waic_from_loglik",
    "smooth_estimates",
    "trajectory_summary",
    "transition_table",
    "evaluate",
]

DEFAULT_RESTARTS = 16
MAX_PASSES = 10


def coclustering(labels) -> np.ndarray:
    """Share of draws in which each pair of items shares a cluster.

    ``labels`` has shape ``(S, n)``; the result is ``(n, n)``, symmetric with
    a unit diagonal.
    """
    lab = np.asarray(labels)
    if lab.ndim != 2 or lab.shape[0] == 0:
        raise ValueError("need at least one draw of shape (S, n)")
    S, n = lab.shape
    out = np.zeros((n, n))
    for row in lab:
        _, inv = np.unique(row, return_inverse=True)
        onehot = np.zeros((n, inv.max() + 1))
        onehot[np.arange(n), inv] = 1.0
        out += onehot @ onehot.T
    return out / S


def expected_vi_lower_bound(partition, psm) -> float:
    """Posterior expectation of the VI lower bound (nats) of ``partition`` given co-clustering ``psm``."""
    c = np.asarray(partition).ravel()
    p = np.asarray(psm, dtype=np.float64)
    n = c.size
    if p.shape != (n, n):
        raise ValueError("partition and co-clustering matrix sizes differ")
    same = c[:, None] == c[None, :]
    size = same.sum(axis=1)
    b = (p * same).sum(axis=1)
    return float(np.sum(np.log(size) - 2.0 * np.log(b) + np.log(p.sum(axis=1))) / n)


# ---------------------------------------------------------------------------
# search kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _xlogx(x):
    return x * math.log(x) if x > 0 else 0.0


@numba.njit(cache=True)
def _loss(c, p):
    n = c.shape[0]
    K = 0
    for i in range(n):
        if c[i] + 1 > K:
            K = c[i] + 1
    size = np.zeros(K)
    for i in range(n):
        size[c[i]] += 1
    total = 0.0
    for k in range(K):
        total += _xlogx(size[k])
    for i in range(n):
        b = 0.0
        for j in range(n):
            if c[j] == c[i]:
                b += p[i, j]
        total -= 2.0 * math.log(b)
    return total


@numba.njit(cache=True)
def _join_delta(i, k, c, size, b, p, n_items, order):
    """Loss change when unallocated item ``i`` joins cluster ``k`` (``-1`` = new)."""
    if k < 0:
        return -2.0 * math.log(p[i, i])
    d = _xlogx(size[k] + 1.0) - _xlogx(size[k])
    bi = p[i, i]
    for t in range(n_items):
        jj = order[t]
        if jj != i and c[jj] == k:
            pij = p[i, jj]
            bi += pij
            d -= 2.0 * (math.log(b[jj] + pij) - math.log(b[jj]))
    return d - 2.0 * math.log(bi)


@numba.njit(cache=True)
def _best_cluster(i, c, size, b, p, n_items, order, K):
    best_k = -1
    best = _join_delta(i, -1, c, size, b, p, n_items, order)
    for k in range(K):
        if size[k] > 0:
            d = _join_delta(i, k, c, size, b, p, n_items, order)
            if d < best - 1e-12:
                best = d
                best_k = k
    return best_k


@numba.njit(cache=True)
def _place(i, k, c, size, b, p, n_items, order):
    c[i] = k
    size[k] += 1
    bi = 0.0
    for t in range(n_items):
        jj = order[t]
        if c[jj] == k:
            if jj != i:
                b[jj] += p[i, jj]
            bi += p[i, jj]
    b[i] = bi


@numba.njit(cache=True)
def _unplace(i, c, size, b, p, n_items, order):
    k = c[i]
    c[i] = -1
    size[k] -= 1
    for t in range(n_items):
        jj = order[t]
        if c[jj] == k:
            b[jj] -= p[i, jj]


@numba.njit(cache=True)
def _free_label(size, K):
    for k in range(K):
        if size[k] == 0:
            return k
    return K


@numba.njit(cache=True)
def _sweeps(c, size, b, p, order, max_passes):
    n = c.shape[0]
    K = size.shape[0]
    for _ in range(max_passes):
        changed = False
        for t in range(n):
            i = order[t]
            old = c[i]
            _unplace(i, c, size, b, p, n, order)
            k = _best_cluster(i, c, size, b, p, n, order, K)
            if k < 0:
                # staying alone in the vacated cluster is the same partition as a new one
                k = old if size[old] == 0 else _free_label(size, K)
            _place(i, k, c, size, b, p, n, order)
            if k != old:
                changed = True
        if not changed:
            break


@numba.njit(cache=True)
def _greedy(p, order, max_passes):
    n = p.shape[0]
    c = np.full(n, -1, dtype=np.int64)
    size = np.zeros(n + 1)
    b = np.zeros(n)
    K = n + 1
    for t in range(n):
        i = order[t]
        k = _best_cluster(i, c, size, b, p, t, order, K)
        if k < 0:
            k = _free_label(size, K)
        _place(i, k, c, size, b, p, t + 1, order)
    _sweeps(c, size, b, p, order, max_passes)
    return c


@numba.njit(cache=True)
def _refine(start, p, order, max_passes):
    n = p.shape[0]
    c = np.empty(n, dtype=np.int64)
    size = np.zeros(n + 1)
    b = np.zeros(n)
    # relabel to 0..K-1
    remap = np.full(n + 1, -1, dtype=np.int64)
    K = 0
    for i in range(n):
        if remap[start[i]] < 0:
            remap[start[i]] = K
            K += 1
        c[i] = remap[start[i]]
        size[c[i]] += 1
    for i in range(n):
        s = 0.0
        for j in range(n):
            if c[j] == c[i]:
                s += p[i, j]
        b[i] = s
    _sweeps(c, size, b, p, order, max_passes)
    return c


def salso(draws, restarts: int = DEFAULT_RESTARTS, seed: int = 0, max_passes: int = MAX_PASSES,
          psm=None) -> np.ndarray:
    """Point partition minimising the expected VI lower bound.

    Each restart allocates the items greedily in a random order and then
    reallocates one item at a time until no move lowers the loss. Every
    distinct sampled partition is also refined the same way, so the result is
    never worse than any draw. The first restart uses the identity order, so
    adding restarts can only lower the loss.

    Parameters
    ----------
    draws : array, shape (S, n)
        Sampled labels.
    psm : array, optional
        Precomputed co-clustering matrix of ``draws``.

    Returns
    -------
    ndarray
        Canonical labels (0-based, by first appearance).
    """
    lab = np.asarray(draws)
    if lab.ndim != 2 or lab.shape[0] == 0:
        raise ValueError("salso needs at least one retained draw")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    p = coclustering(lab) if psm is None else np.ascontiguousarray(psm, dtype=np.float64)
    n = p.shape[0]
    gen = np.random.default_rng(seed)
    ident = np.arange(n, dtype=np.int64)
    best, best_loss = None, np.inf

    def consider(c):
        nonlocal best, best_loss
        c = canonical(c)
        loss = _loss(c, p)
        if loss < best_loss - 1e-12:
            best, best_loss = c, loss

    orders = [ident] + [gen.permutation(n).astype(np.int64) for _ in range(restarts - 1)]
    for order in orders:
        consider(_greedy(p, order, max_passes))
    for row in np.unique(np.array([canonical(r) for r in lab]), axis=0):
        consider(_refine(row.astype(np.int64), p, ident, max_passes))
    return best


def estimate_partition(labels, hierarchical: bool, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> np.ndarray:
    """SALSO over all participant-periods (hierarchical) or period by period.

    ``labels`` has shape ``(S, J, N)``; returns ``(J, N)`` labels. Clusters
    estimated period by period get labels that are distinct across periods,
    since they share no identity.
    """
    lab = np.asarray(labels)
    S, J, N = lab.shape
    if hierarchical:
        return salso(lab.reshape(S, J * N), restarts, seed).reshape(J, N)
    out = np.empty((J, N), dtype=np.int64)
    offset = 0
    for j in range(J):
        out[j] = salso(lab[:, j], restarts, seed) + offset
        offset = out[j].max() + 1
    return out


# ---------------------------------------------------------------------------
# WAIC
# ---------------------------------------------------------------------------


def _subsample(S: int, fraction: float) -> np.ndarray:
    k = max(1, math.ceil(fraction * S - 1e-9))
    return np.unique(np.round(np.linspace(0, S - 1, min(k, S))).astype(np.int64))


def waic_from_loglik(loglik, fraction: float = 1.0, iterations=None) -> dict:
    """WAIC from pointwise log-likelihood draws of shape ``(S, ...)``.

    Draws are put in iteration order (``iterations`` if given) and an evenly
    spaced subsample of ``ceil(fraction * S)`` of them is used.
    """
    ll = np.asarray(loglik, dtype=np.float64)
    if ll.ndim == 0 or ll.shape[0] == 0:
        raise ValueError("no draws")
    if iterations is not None:
        ll = ll[np.argsort(np.asarray(iterations), kind="stable")]
    ll = ll[_subsample(ll.shape[0], fraction)]
    ll = ll.reshape(ll.shape[0], -1)
    S = ll.shape[0]
    if S < 2:
        raise ValueError(f"WAIC needs at least 2 draws after subsampling, got {S}")
    lppd = float(np.sum(logsumexp(ll, axis=0) - math.log(S)))
    p_waic = float(np.sum(np.var(ll, axis=0, ddof=1)))
    return {"waic": -2.0 * (lppd - p_waic), "lppd": lppd, "p_waic": p_waic, "n_draws": S}


def waic(archive: ChainArchive, fraction: float | None = None) -> dict:
    f = archive.hyper.waic_fraction if fraction is None else fraction
    return waic_from_loglik(archive.loglik, f, archive.iterations)


# ---------------------------------------------------------------------------
# smooth functions and trajectories
# ---------------------------------------------------------------------------


def smooth_draws(archive: ChainArchive, data=None) -> np.ndarray:
    """Sampled smooth values at every observation, shape (S, n_obs)."""
    data = archive.dataset if data is None else data
    basis = build_basis(archive.header["Q"])
    span, vals = local_rows(basis, data.time)
    cols = span[:, None] + np.arange(vals.shape[1])
    lab = archive.labels
    out = np.empty((archive.n_draws, data.n_obs))
    for s in range(archive.n_draws):
        coef = archive.beta(s)[lab[s][data.jj, data.ii]]
        out[s] = np.sum(vals * np.take_along_axis(coef, cols, axis=1), axis=1)
    return out


def smooth_estimates(archive: ChainArchive, data=None) -> np.ndarray:
    """Posterior mean of the smooth term at every observation."""
    return smooth_draws(archive, data).mean(axis=0)


def trajectory_summary(archive: ChainArchive, estimate, grid=None, level: float = 0.95) -> list[dict]:
    """Per estimated cluster: posterior mean curve and central band over ``grid``.

    For each estimated cluster the curves of its members are pooled over
    draws. Clusters are returned in descending order of average log-odds.
    """
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or grid.min() < 0.0 or grid.max() > 1.0:
        raise ValueError("trajectory grid must lie in [0, 1]")
    est = np.asarray(estimate)
    T = design_matrix(build_basis(archive.header["Q"]), grid)
    lab = archive.labels
    curves = [archive.beta(s) @ T.T for s in range(archive.n_draws)]  # (D_s, G)
    lo_q, hi_q = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    out = []
    for c in np.unique(est):
        members = np.argwhere(est == c)
        pooled = np.concatenate([curves[s][lab[s][members[:, 0], members[:, 1]]] for s in range(archive.n_draws)])
        mean = pooled.mean(axis=0)
        out.append({
            "cluster": int(c),
            "size": int(members.shape[0]),
            "mean": mean,
            "lower": np.quantile(pooled, lo_q, axis=0),
            "upper": np.quantile(pooled, hi_q, axis=0),
            "avg_log_odds": float(mean.mean()),
        })
    out.sort(key=lambda r: -r["avg_log_odds"])
    return out


def transition_table(estimate) -> list[tuple[np.ndarray, np.ndarray]]:
    """Counts of moves from each cluster at period j to each cluster at j + 1.

    Returns one ``(labels, table)`` pair per transition; rows and columns are
    indexed by ``labels``, the clusters present at either period.
    """
    est = np.asarray(estimate)
    out = []
    for j in range(est.shape[0] - 1):
        labs = np.union1d(est[j], est[j + 1])
        pos = {int(k): r for r, k in enumerate(labs)}
        table = np.zeros((labs.size, labs.size), dtype=np.int64)
        for a, b in zip(est[j], est[j + 1]):
            table[pos[int(a)], pos[int(b)]] += 1
        out.append((labs, table))
    return out


# ---------------------------------------------------------------------------
# scoring against truth
# ---------------------------------------------------------------------------


def evaluate(archive: ChainArchive, truth, estimate=None, restarts: int = DEFAULT_RESTARTS) -> dict:
    """VI, ARI, smooth MSE and (temporal variants) flag accuracy against simulation truth.

    VI and ARI are computed within each period and averaged over periods, so
    that variants with and without shared clusters are scored alike.
    Hierarchical variants also report the scores over all participant-periods.
    """
    hyper = archive.hyper
    true_labels = np.asarray(truth.labels)
    J, N = archive.header["J"], archive.header["N"]
    if true_labels.shape != (J, N):
        raise ValueError(f"truth labels have shape {true_labels.shape}, chain has ({J}, {N})")
    data = archive.dataset
    if np.asarray(truth.smooth).shape != (data.n_obs,):
        raise ValueError("truth smooth values do not match the number of observations")
    if estimate is None:
        estimate = estimate_partition(archive.labels, hyper.hierarchical, restarts)
    vi = [variation_of_information(true_labels[j], estimate[j]) for j in range(J)]
    ari = [adjusted_rand_index(true_labels[j], estimate[j]) for j in range(J)]
    res = {
        "vi": float(np.mean(vi)),
        "ari": float(np.mean(ari)),
        "vi_by_period": vi,
        "ari_by_period": ari,
        "mse_smooth": mse_smooth(smooth_estimates(archive, data), truth.smooth),
    }
    if hyper.hierarchical:
        res["vi_global"] = variation_of_information(true_labels, estimate)
        res["ari_global"] = adjusted_rand_index(true_labels, estimate)
    if hyper.temporal:
        res["gamma_accuracy"] = gamma_accuracy(archive.gamma, truth.gamma)
    return res
