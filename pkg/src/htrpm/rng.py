"""Random-variate primitives.

The scalar kernels (``pg1``, ``inv_gamma``, ``mvn_precision``, ...) are numba
functions that take a :class:`numpy.random.Generator`; numba drives the
generator's bit stream directly, so the Python-side generator state always
reflects every draw made inside compiled code and can be checkpointed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "RngStream",
    "as_generator",
    "sample_pg",
    "sample_inverse_gamma",
    "sample_mvn",
    "sample_categorical",
]

_PG_TRUNC = 0.64
_PI = math.pi


@dataclass
class RngStream:
    """Seedable, splittable random stream.

    Identical ``(seed, path)`` pairs give identical variate sequences; sibling
    paths are derived through :class:`numpy.random.SeedSequence` spawn keys and
    are statistically independent.
    """

    seed: int
    path: tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)
        self.path = tuple(int(p) for p in self.path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def split(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(index),))

    @property
    def state(self) -> dict:
        return self.generator.bit_generator.state

    @state.setter
    def state(self, value: dict) -> None:
        self.generator.bit_generator.state = value


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Polya-Gamma PG(1, z): Devroye-type alternating-series rejection sampler.
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _log_norm_cdf(x):
    return math.log(0.5 * math.erfc(-x / math.sqrt(2.0)))


@numba.njit(cache=True)
def _series_coef(n, x):
    k = n + 0.5
    if x > _PG_TRUNC:
        return _PI * k * math.exp(-k * k * _PI * _PI * x / 2.0)
    return (2.0 / _PI / x) ** 1.5 * _PI * k * math.exp(-2.0 * k * k / x)


@numba.njit(cache=True)
def _exp_mass(z):
    # probability of proposing from the exponential tail given z = |psi| / 2
    t = _PG_TRUNC
    fz = _PI * _PI / 8.0 + z * z / 2.0
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + _log_norm_cdf(b)
    xa = x0 + z + _log_norm_cdf(a)
    qdivp = 4.0 / _PI * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


@numba.njit(cache=True)
def _trunc_inv_gauss(rng, z):
    # inverse Gaussian IG(1/z, 1) truncated to (0, TRUNC)
    t = _PG_TRUNC
    x = t + 1.0
    if z < 1.0 / t:
        alpha = 0.0
        while rng.random() > alpha:
            e1 = rng.standard_exponential()
            e2 = rng.standard_exponential()
            while e1 * e1 > 2.0 * e2 / t:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
            x = t / (1.0 + t * e1) ** 2
            alpha = math.exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > t:
            yy = rng.standard_normal()
            yy = yy * yy
            x = mu + 0.5 * mu * mu * yy - 0.5 * mu * math.sqrt(4.0 * mu * yy + (mu * yy) ** 2)
            if rng.random() > mu / (mu + x):
                x = mu * mu / x
    return x


@numba.njit(cache=True)
def pg1(rng, psi):
    """One draw from PG(1, psi)."""
    z = abs(psi) * 0.5
    fz = _PI * _PI / 8.0 + z * z / 2.0
    p_exp = _exp_mass(z)
    while True:
        if rng.random() < p_exp:
            x = _PG_TRUNC + rng.standard_exponential() / fz
        else:
            x = _trunc_inv_gauss(rng, z)
        s = _series_coef(0, x)
        u = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _series_coef(n, x)
                if u <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if u > s:
                    break


@numba.njit(cache=True)
def _pg1_vec(rng, z, out):
    for k in range(z.shape[0]):
        out[k] = pg1(rng, z[k])


def sample_pg(z, rng, b: int = 1):
    """Draw from the Polya-Gamma distribution PG(b, z), b = 1 only.

    ``z`` may be a scalar or an array; an array gives one independent draw per
    element.
    """
    if b != 1:
        raise ValueError("only PG(1, z) is supported")
    gen = as_generator(rng)
    arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("PG tilting parameter must be finite")
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    _pg1_vec(gen, flat, out)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Inverse gamma, Gaussian, categorical.
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def inv_gamma(rng, shape, scale):
    return scale / rng.standard_gamma(shape)


def sample_inverse_gamma(shape: float, scale: float, rng, size=None):
    """Draw from IG(shape, scale), density proportional to x^(-shape-1) exp(-scale/x)."""
    if not (shape > 0 and scale > 0):
        raise ValueError("inverse-gamma shape and scale must be positive")
    gen = as_generator(rng)
    return scale / gen.standard_gamma(shape, size=size)


@numba.njit(cache=True)
def chol_lower(a, out):
    """In-place lower Cholesky factor of the leading block; False if not SPD."""
    n = a.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            if i == j:
                if not s > 0.0:
                    return False
                out[i, i] = math.sqrt(s)
            else:
                out[i, j] = s / out[j, j]
        for j in range(i + 1, n):
            out[i, j] = 0.0
    return True


@numba.njit(cache=True)
def mvn_canonical(rng, prec, lin, out, work):
    """Draw x ~ N(prec^-1 lin, prec^-1) without forming the inverse.

    ``work`` is an (n, n) scratch buffer for the Cholesky factor. Returns False
    when ``prec`` is not positive definite.
    """
    n = prec.shape[0]
    if not chol_lower(prec, work):
        return False
    # forward solve L w = lin
    w = np.empty(n)
    for i in range(n):
        s = lin[i]
        for k in range(i):
            s -= work[i, k] * w[k]
        w[i] = s / work[i, i]
    # x = L^-T (w + eps)
    for i in range(n):
        w[i] += rng.standard_normal()
    for i in range(n - 1, -1, -1):
        s = w[i]
        for k in range(i + 1, n):
            s -= work[k, i] * out[k]
        out[i] = s / work[i, i]
    return True


def sample_mvn(mean, rng, covariance=None, precision=None):
    """Draw one multivariate normal vector.

    Exactly one of ``covariance`` and ``precision`` must be given. The
    precision form solves against the Cholesky factor instead of inverting.
    """
    if (covariance is None) == (precision is None):
        raise ValueError("give exactly one of covariance or precision")
    gen = as_generator(rng)
    mean = np.asarray(mean, dtype=np.float64)
    mat = np.asarray(covariance if covariance is not None else precision, dtype=np.float64)
    if mat.shape != (mean.size, mean.size) or not np.allclose(mat, mat.T):
        raise ValueError("matrix must be square, symmetric and match the mean")
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not positive definite") from exc
    eps = gen.standard_normal(mean.size)
    if covariance is not None:
        return mean + chol @ eps
    return mean + solve_triangular(chol.T, eps, lower=False)


@numba.njit(cache=True)
def categorical_log(rng, logw, n):
    """Index drawn with probability softmax(logw[:n]); -1 if all are -inf."""
    mx = -np.inf
    for k in range(n):
        if logw[k] > mx:
            mx = logw[k]
    if mx == -np.inf:
        return -1
    total = 0.0
    for k in range(n):
        total += math.exp(logw[k] - mx)
    u = rng.random() * total
    acc = 0.0
    last = -1
    for k in range(n):
        if logw[k] == -np.inf:
            continue
        acc += math.exp(logw[k] - mx)
        last = k
        if u < acc:
            return k
    return last


def sample_categorical(log_weights, rng) -> int:
    """Index drawn with probability proportional to exp(log_weights)."""
    lw = np.ascontiguousarray(np.asarray(log_weights, dtype=np.float64))
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log_weights must be a non-empty vector")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log_weights must not contain nan or +inf")
    k = categorical_log(as_generator(rng), lw, lw.size)
    if k < 0:
        raise ValueError("all weights are zero")
    return int(k)
