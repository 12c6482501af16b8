"""Clamped cubic B-spline basis on [0, 1]."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGREE = 3


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis with uniformly spaced interior knots.

    Attributes
    ----------
    Q : int
        Number of basis functions.
    knots : ndarray
        Full knot vector of length ``Q + DEGREE + 1``; the boundary knots 0 and
        1 are repeated ``DEGREE + 1`` times.
    """

    Q: int
    knots: np.ndarray
    degree: int = DEGREE

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.degree + 1 : -(self.degree + 1)]

    def to_dict(self) -> dict:
        return {"Q": self.Q}


def build_basis(Q: int) -> SplineBasis:
    if int(Q) != Q or Q < DEGREE + 1:
        raise ValueError(f"a cubic basis needs Q >= {DEGREE + 1}, got {Q}")
    Q = int(Q)
    n_interior = Q - DEGREE - 1
    interior = np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.concatenate([np.zeros(DEGREE + 1), interior, np.ones(DEGREE + 1)])
    knots.setflags(write=False)
    return SplineBasis(Q=Q, knots=knots)


def _check_times(t: np.ndarray) -> None:
    if t.size and (not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0):
        raise ValueError("spline evaluation points must lie in [0, 1]")


def local_rows(basis: SplineBasis, times) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero basis values at each time.

    Returns ``(span, values)`` where ``values[m, r]`` is basis function
    ``span[m] + r`` evaluated at ``times[m]`` for ``r = 0..DEGREE``; all other
    basis functions vanish there.
    """
    t = np.asarray(times, dtype=np.float64).ravel()
    _check_times(t)
    p = basis.degree
    knots = basis.knots
    # knot interval index, with t = 1 folded into the last nondegenerate interval
    mu = np.searchsorted(knots, t, side="right") - 1
    mu = np.clip(mu, p, basis.Q - 1)
    M = t.size
    vals = np.zeros((M, p + 1))
    vals[:, 0] = 1.0
    left = np.empty((M, p + 1))
    right = np.empty((M, p + 1))
    # Cox-de Boor recursion, triangular form
    for k in range(1, p + 1):
        left[:, k] = t - knots[mu + 1 - k]
        right[:, k] = knots[mu + k] - t
        saved = np.zeros(M)
        for r in range(k):
            temp = vals[:, r] / (right[:, r + 1] + left[:, k - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, k - r] * temp
        vals[:, k] = saved
    return (mu - p).astype(np.int64), vals


def evaluate(basis: SplineBasis, t: float) -> np.ndarray:
    """Vector of the ``Q`` basis functions at a single point ``t``."""
    return design_matrix(basis, np.array([t], dtype=np.float64))[0]


def design_matrix(basis: SplineBasis, times) -> np.ndarray:
    """Dense ``M x Q`` matrix whose rows are the basis evaluated at ``times``."""
    span, vals = local_rows(basis, times)
    out = np.zeros((span.size, basis.Q))
    rows = np.arange(span.size)[:, None]
    out[rows, span[:, None] + np.arange(basis.degree + 1)] = vals
    return out
