"""Agreement between partitions and recovery scores against simulation truth."""
from __future__ import annotations

import numpy as np

__all__ = [
    "contingency",
    "variation_of_information",
    "adjusted_rand_index",
    "mse_smooth",
    "gamma_accuracy",
]


def contingency(p1, p2) -> np.ndarray:
    """Cross-tabulation of two labelings of the same items."""
    a = np.asarray(p1).ravel()
    b = np.asarray(p2).ravel()
    if a.shape != b.shape:
        raise ValueError(f"partitions cover different ground sets ({a.size} vs {b.size} items)")
    if a.size == 0:
        raise ValueError("partitions are empty")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _plogp(counts, n):
    p = counts[counts > 0] / n
    return float(np.sum(p * np.log(p)))


def variation_of_information(p1, p2) -> float:
    """VI = H(p1) + H(p2) - 2 I(p1, p2) in nats."""
    table = contingency(p1, p2)
    n = table.sum()
    h1 = -_plogp(table.sum(axis=1), n)
    h2 = -_plogp(table.sum(axis=0), n)
    h12 = -_plogp(table.ravel(), n)
    # VI = 2 H(p1, p2) - H(p1) - H(p2)
    return max(0.0, 2.0 * h12 - h1 - h2)


def _pairs(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * (x - 1.0) / 2.0))


def adjusted_rand_index(p1, p2) -> float:
    """Hubert-Arabie adjusted Rand index (can be negative)."""
    table = contingency(p1, p2)
    n = table.sum()
    idx = _pairs(table.ravel())
    a = _pairs(table.sum(axis=1))
    b = _pairs(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = a * b / total if total > 0 else 0.0
    top = 0.5 * (a + b)
    if top == expected:
        # both partitions trivial in the same way (all-in-one or all-singletons)
        return 1.0
    return (idx - expected) / (top - expected)


def mse_smooth(estimates, truth) -> float:
    """Mean squared difference of estimated and true smooth values over all observations."""
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    return float(np.mean((est - tru) ** 2))


def gamma_accuracy(draws, truth) -> float:
    """Share of sampled flags equal to the truth, over draws and periods after the first.

    ``draws`` has shape ``(S, J, N)`` (or ``(J, N)`` for one draw), ``truth``
    shape ``(J, N)``.
    """
    g = np.asarray(draws)
    t = np.asarray(truth)
    if g.ndim == 2:
        g = g[None]
    if g.ndim != 3 or g.shape[1:] != t.shape:
        raise ValueError(f"flag draws of shape {g.shape} do not match truth {t.shape}")
    if g.shape[0] == 0 or t.shape[0] < 2:
        raise ValueError("need at least one draw and two periods")
    return float(np.mean(g[:, 1:] == t[None, 1:]))
