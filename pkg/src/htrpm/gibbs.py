"""Gibbs sampler for the hierarchical temporal random partition model.

One sweep visits the periods in order. Within period ``j`` it updates the
fixed/flexible flags, then each participant's dish, then every active dish's
spline coefficients and horseshoe scales, then the period's baseline effects
``theta_j`` and transition coefficients ``eta_j``. Bernoulli-logit conditionals
are made Gaussian with fresh Polya-Gamma latents drawn right before each of
the coefficient updates.

Cluster reallocation uses auxiliary fresh dishes drawn from the horseshoe
prior (a participant that was alone on its dish reuses that dish as the first
auxiliary). For participants fixed into the next period, only dishes that keep
the next transition compatible are offered.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import Hyperparameters, ModelState, PanelDataset
from .partition import PartitionSequence, _add, _remove, crf_prior_logweights
from .rng import as_generator, categorical_log, inv_gamma, mvn_canonical, pg1
from .spline import build_basis, local_rows

log = logging.getLogger(__name__)

__all__ = [
    "SamplerContext",
    "SamplerError",
    "build_context",
    "initial_state",
    "update_gamma",
    "update_cluster",
    "update_beta_star",
    "update_horseshoe",
    "update_theta",
    "update_eta",
    "sweep",
    "cell_loglik",
    "draw_prior_dish",
]

OK, NONFINITE, NOT_SPD, NO_CANDIDATE = 0, 1, 2, 3
_STATUS = {
    NONFINITE: "non-finite coefficient",
    NOT_SPD: "posterior precision not positive definite",
    NO_CANDIDATE: "no admissible cluster for participant",
}


class SamplerError(FloatingPointError):
    """Numerical failure inside a sweep."""


@dataclass
class SamplerContext:
    """Data and resolved priors in the array layout used by the kernels.

    Observation ``m`` of cell ``k = j * N + i`` lives in rows
    ``start[k]:start[k + 1]``; its spline row is ``bvals[m]`` placed at basis
    index ``span[m]``.
    """

    span: np.ndarray
    bvals: np.ndarray
    y: np.ndarray
    start: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    Q: int
    alpha: float
    alpha0: float
    hierarchical: bool
    temporal: bool
    n_aux: int
    clamp: float
    theta_prec: np.ndarray
    theta_lin0: np.ndarray
    eta_prec: np.ndarray
    eta_lin0: np.ndarray

    @property
    def J(self) -> int:
        return self.Z.shape[0]

    @property
    def N(self) -> int:
        return self.Z.shape[1]

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def capacity(self) -> int:
        return self.N * self.J + self.n_aux + 1

    def dat(self) -> tuple:
        return (self.span, self.bvals, self.y, self.start, self.Z, self.X)

    def cfg(self) -> tuple:
        return (float(self.alpha), float(self.alpha0), bool(self.hierarchical), bool(self.temporal),
                int(self.n_aux), float(self.clamp))

    def pri(self) -> tuple:
        return (self.theta_prec, self.theta_lin0, self.eta_prec, self.eta_lin0)


def _priors(hyper: Hyperparameters, dz: int, dx: int):
    theta_prec = np.linalg.inv(hyper.theta_cov(dz)) if dz else np.zeros((0, 0))
    eta_prec = np.linalg.inv(hyper.eta_cov(dx)) if dx else np.zeros((0, 0))
    eta_lin0 = eta_prec @ hyper.eta_mean(dx) if dx else np.zeros(0)
    return theta_prec, np.zeros(dz), eta_prec, eta_lin0


def build_context(data: PanelDataset, hyper: Hyperparameters, *, span=None, bvals=None, Q=None) -> SamplerContext:
    """Assemble a :class:`SamplerContext` from validated data.

    The spline rows default to the clamped cubic basis with ``hyper.Q``
    functions; ``span``/``bvals``/``Q`` override them with a custom design.
    """
    if not data.validated:
        raise ValueError("dataset must be validated first")
    if span is None:
        basis = build_basis(hyper.Q)
        span, bvals = local_rows(basis, data.time)
        Q = hyper.Q
    if hyper.temporal and data.dx == 0:
        raise ValueError(f"variant {hyper.display_name} needs transition covariates")
    theta_prec, theta_lin0, eta_prec, eta_lin0 = _priors(hyper, data.dz, data.dx)
    return SamplerContext(
        span=np.ascontiguousarray(span, dtype=np.int64),
        bvals=np.ascontiguousarray(bvals, dtype=np.float64),
        y=data.y.astype(np.float64),
        start=data.item_starts(),
        Z=np.ascontiguousarray(data.Z),
        X=np.ascontiguousarray(data.X),
        Q=int(Q),
        alpha=float(hyper.alpha),
        alpha0=float(hyper.alpha0 or 0.0),
        hierarchical=hyper.hierarchical,
        temporal=hyper.temporal,
        n_aux=int(hyper.n_aux),
        clamp=float(hyper.clamp),
        theta_prec=theta_prec,
        theta_lin0=theta_lin0,
        eta_prec=eta_prec,
        eta_lin0=eta_lin0,
    )


def context_from_arrays(span, bvals, y, counts, Z, X, hyper: Hyperparameters, Q: int) -> SamplerContext:
    """Context for a hand-built design; ``counts[j, i]`` observations per cell."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    theta_prec, theta_lin0, eta_prec, eta_lin0 = _priors(hyper, Z.shape[2], X.shape[2])
    start = np.concatenate([[0], np.cumsum(np.asarray(counts).ravel())]).astype(np.int64)
    bvals = np.ascontiguousarray(bvals, dtype=np.float64)
    if bvals.ndim == 1:
        bvals = bvals.reshape(-1, 1)
    if start[-1] != len(y) or bvals.shape[0] != len(y):
        raise ValueError("counts, spline rows and outcomes disagree on the number of observations")
    return SamplerContext(
        span=np.ascontiguousarray(span, dtype=np.int64).reshape(-1),
        bvals=bvals,
        y=np.asarray(y, dtype=np.float64).reshape(-1),
        start=start,
        Z=Z,
        X=X,
        Q=int(Q),
        alpha=float(hyper.alpha),
        alpha0=float(hyper.alpha0 or 0.0),
        hierarchical=hyper.hierarchical,
        temporal=hyper.temporal,
        n_aux=int(hyper.n_aux),
        clamp=float(hyper.clamp),
        theta_prec=theta_prec,
        theta_lin0=theta_lin0,
        eta_prec=eta_prec,
        eta_lin0=eta_lin0,
    )


def initial_state(ctx: SamplerContext) -> ModelState:
    """All coefficients at zero, everyone in one cluster, unit horseshoe scales."""
    cap = ctx.capacity
    ps = PartitionSequence.single_cluster(ctx.N, ctx.J, cap, ctx.hierarchical)
    dz, dx = ctx.Z.shape[2], ctx.X.shape[2]
    return ModelState(
        partition=ps,
        beta=np.zeros((cap, ctx.Q)),
        tau2=np.ones(cap),
        lam2=np.ones((cap, ctx.Q)),
        nu_tau=np.ones(cap),
        nu_lam=np.ones((cap, ctx.Q)),
        theta=np.zeros((ctx.J, dz)),
        eta=np.zeros((ctx.J, dx)),
        offset=np.zeros((ctx.J, ctx.N)),
        omega_beta=np.zeros(ctx.n_obs),
        omega_theta=np.zeros(ctx.n_obs),
        omega_eta=np.zeros((ctx.J, ctx.N)),
    )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@numba.njit(cache=True)
def _spline_value(span, bvals, beta_d, m):
    s = 0.0
    base = span[m]
    for r in range(bvals.shape[1]):
        s += bvals[m, r] * beta_d[base + r]
    return s


@numba.njit(cache=True)
def _clamp(psi, clamp, counters, slot=0):
    # counters[0]: Polya-Gamma tilts, counters[1]: likelihood evaluations
    if psi > clamp:
        counters[slot] += 1
        return clamp
    if psi < -clamp:
        counters[slot] += 1
        return -clamp
    return psi


@numba.njit(cache=True)
def _cell_loglik(k, beta_d, off, span, bvals, y, start, clamp, counters):
    ll = 0.0
    for m in range(start[k], start[k + 1]):
        psi = _clamp(_spline_value(span, bvals, beta_d, m) + off, clamp, counters, 1)
        ll += y[m] * psi - _log1pexp(psi)
    return ll


@numba.njit(cache=True)
def _draw_prior_dish(rng, d, beta, tau2, lam2, nu_tau, nu_lam):
    Q = beta.shape[1]
    nu_tau[d] = inv_gamma(rng, 0.5, 1.0)
    tau2[d] = inv_gamma(rng, 0.5, 1.0 / nu_tau[d])
    for q in range(Q):
        nu_lam[d, q] = inv_gamma(rng, 0.5, 1.0)
        lam2[d, q] = inv_gamma(rng, 0.5, 1.0 / nu_lam[d, q])
        beta[d, q] = math.sqrt(tau2[d] * lam2[d, q]) * rng.standard_normal()


@numba.njit(cache=True)
def _gamma_weights(i, j, X, ps, eta, cfg):
    """Unnormalised (w_fixed, w_flexible) for participant i at period j >= 1."""
    labels, gamma, customers, tables, dish_tables, dish_size, owner = ps
    alpha, alpha0, hierarchical, temporal, n_aux, clamp = cfg
    N = labels.shape[1]
    lin = 0.0
    for r in range(X.shape[2]):
        lin += X[j, i, r] * eta[j, r]
    phi = 1.0 / (1.0 + math.exp(-lin))
    c_prev = labels[j - 1, i]
    c_curr = labels[j, i]
    compatible = True
    n_fixed = 0
    n_fixed_same = 0
    for k in range(N):
        if k == i or gamma[j, k] == 0:
            continue
        n_fixed += 1
        same_prev = labels[j - 1, k] == c_prev
        same_curr = labels[j, k] == c_curr
        if same_prev != same_curr:
            compatible = False
        if same_curr:
            n_fixed_same += 1
    # predictive mass of i's current dish given the other fixed participants
    if hierarchical:
        mtot = 0
        for d in range(dish_tables.shape[0]):
            mtot += dish_tables[d]
        m_d = dish_tables[c_curr]
        if customers[j, c_curr] == 1:
            m_d -= 1
            mtot -= 1
        if dish_size[c_curr] == 1:
            mass = n_fixed_same + alpha * alpha0 / (mtot + alpha0)
        else:
            mass = n_fixed_same + alpha * m_d / (mtot + alpha0)
    else:
        mass = n_fixed_same if n_fixed_same > 0 else alpha
    pred = mass / (n_fixed + alpha)
    w_fixed = phi if compatible else 0.0
    return w_fixed, (1.0 - phi) * pred


@numba.njit(cache=True)
def _update_gamma(i, j, rng, dat, ps, par, cfg):
    gamma = ps[1]
    X = dat[5]
    eta = par[6]
    w1, w0 = _gamma_weights(i, j, X, ps, eta, cfg)
    if w1 <= 0.0:
        gamma[j, i] = 0
    elif rng.random() * (w1 + w0) < w1:
        gamma[j, i] = 1
    else:
        gamma[j, i] = 0


@numba.njit(cache=True)
def _update_cluster(i, j, rng, dat, ps, par, cfg, cand, logw, excl):
    span, bvals, y, start, Z, X = dat
    labels, gamma, customers, tables, dish_tables, dish_size, owner = ps
    beta, tau2, lam2, nu_tau, nu_lam, theta, eta, offset, omega_beta, omega_theta, omega_eta, counters = par
    alpha, alpha0, hierarchical, temporal, n_aux, clamp = cfg
    J, N = labels.shape
    if temporal and j > 0 and gamma[j, i] == 1:
        return OK
    old = labels[j, i]
    _remove(i, j, labels, gamma, customers, tables, dish_tables, dish_size, owner)

    # admissible dishes given a fixed flag into period j + 1
    constrained = temporal and j < J - 1 and gamma[j + 1, i] == 1
    forced = -1
    if constrained:
        for k in range(N):
            if k != i and gamma[j + 1, k] == 1:
                excl[labels[j, k]] = True
                if labels[j + 1, k] == labels[j + 1, i]:
                    forced = labels[j, k]

    K, fresh = crf_prior_logweights(j, customers, dish_tables, dish_size, hierarchical, alpha, alpha0, n_aux, cand, logw)
    if constrained:
        kk = 0
        for k in range(K):
            d = cand[k]
            keep = (d == forced) if forced >= 0 else not excl[d]
            if keep:
                cand[kk] = d
                logw[kk] = logw[k]
                kk += 1
        K = kk
        for k in range(N):
            if k != i and gamma[j + 1, k] == 1:
                excl[labels[j, k]] = False

    if forced < 0:
        # auxiliary fresh dishes; a vacated singleton dish is reused first
        slot = 0
        for a in range(n_aux):
            if a == 0 and dish_size[old] == 0:
                d = old
            else:
                while dish_size[slot] > 0 or slot == old:
                    slot += 1
                d = slot
                slot += 1
                _draw_prior_dish(rng, d, beta, tau2, lam2, nu_tau, nu_lam)
            cand[K] = d
            logw[K] = fresh
            K += 1

    k_cell = j * N + i
    off = offset[j, i]
    for k in range(K):
        ll = _cell_loglik(k_cell, beta[cand[k]], off, span, bvals, y, start, clamp, counters)
        lw = logw[k] + ll
        logw[k] = lw if lw == lw else -np.inf
    pick = categorical_log(rng, logw, K)
    if pick < 0:
        _add(i, j, old, labels, gamma, customers, tables, dish_tables, dish_size, owner)
        return NO_CANDIDATE
    _add(i, j, cand[pick], labels, gamma, customers, tables, dish_tables, dish_size, owner)
    return OK


@numba.njit(cache=True)
def _update_beta(rng, mask, dat, ps, par, cfg):
    """Polya-Gamma Gibbs update of every dish flagged in ``mask``, then its horseshoe."""
    span, bvals, y, start, Z, X = dat
    labels = ps[0]
    beta, tau2, lam2, nu_tau, nu_lam, theta, eta, offset, omega_beta, omega_theta, omega_eta, counters = par
    clamp = cfg[5]
    J, N = labels.shape
    Q = beta.shape[1]
    W = bvals.shape[1]
    cap = beta.shape[0]
    idx = np.full(cap, -1, dtype=np.int64)
    n_upd = 0
    for d in range(cap):
        if mask[d]:
            idx[d] = n_upd
            n_upd += 1
    prec = np.zeros((n_upd, Q, Q))
    lin = np.zeros((n_upd, Q))
    for j in range(J):
        for i in range(N):
            d = labels[j, i]
            c = idx[d]
            if c < 0:
                continue
            off = offset[j, i]
            k = j * N + i
            for m in range(start[k], start[k + 1]):
                psi = _clamp(_spline_value(span, bvals, beta[d], m) + off, clamp, counters)
                w = pg1(rng, psi)
                omega_beta[m] = w
                kappa = y[m] - 0.5 - w * off
                s = span[m]
                for r in range(W):
                    br = bvals[m, r]
                    lin[c, s + r] += br * kappa
                    wb = w * br
                    for r2 in range(W):
                        prec[c, s + r, s + r2] += wb * bvals[m, r2]
    work = np.empty((Q, Q))
    out = np.empty(Q)
    for d in range(cap):
        c = idx[d]
        if c < 0:
            continue
        for q in range(Q):
            prec[c, q, q] += 1.0 / (tau2[d] * lam2[d, q])
        if not mvn_canonical(rng, prec[c], lin[c], out, work):
            return NOT_SPD
        for q in range(Q):
            if not math.isfinite(out[q]):
                return NONFINITE
            beta[d, q] = out[q]
        _update_horseshoe(rng, d, beta, tau2, lam2, nu_tau, nu_lam)
    return OK


@numba.njit(cache=True)
def _update_horseshoe(rng, d, beta, tau2, lam2, nu_tau, nu_lam):
    Q = beta.shape[1]
    for q in range(Q):
        lam2[d, q] = inv_gamma(rng, 1.0, 1.0 / nu_lam[d, q] + beta[d, q] ** 2 / (2.0 * tau2[d]))
    s = 0.0
    for q in range(Q):
        s += beta[d, q] ** 2 / lam2[d, q]
    tau2[d] = inv_gamma(rng, (Q + 1) / 2.0, 1.0 / nu_tau[d] + 0.5 * s)
    for q in range(Q):
        nu_lam[d, q] = inv_gamma(rng, 1.0, 1.0 + 1.0 / lam2[d, q])
    nu_tau[d] = inv_gamma(rng, 1.0, 1.0 + 1.0 / tau2[d])


@numba.njit(cache=True)
def _update_theta(j, rng, dat, ps, par, cfg, pri):
    span, bvals, y, start, Z, X = dat
    labels = ps[0]
    beta, tau2, lam2, nu_tau, nu_lam, theta, eta, offset, omega_beta, omega_theta, omega_eta, counters = par
    clamp = cfg[5]
    theta_prec, theta_lin0 = pri[0], pri[1]
    N = labels.shape[1]
    dz = Z.shape[2]
    if dz == 0:
        return OK
    prec = theta_prec.copy()
    lin = theta_lin0.copy()
    for i in range(N):
        d = labels[j, i]
        k = j * N + i
        w_sum = 0.0
        k_sum = 0.0
        for m in range(start[k], start[k + 1]):
            sv = _spline_value(span, bvals, beta[d], m)
            psi = _clamp(sv + offset[j, i], clamp, counters)
            w = pg1(rng, psi)
            omega_theta[m] = w
            w_sum += w
            k_sum += y[m] - 0.5 - w * sv
        for a in range(dz):
            lin[a] += Z[j, i, a] * k_sum
            for b in range(dz):
                prec[a, b] += w_sum * Z[j, i, a] * Z[j, i, b]
    work = np.empty((dz, dz))
    out = np.empty(dz)
    if not mvn_canonical(rng, prec, lin, out, work):
        return NOT_SPD
    for a in range(dz):
        if not math.isfinite(out[a]):
            return NONFINITE
        theta[j, a] = out[a]
    for i in range(N):
        s = 0.0
        for a in range(dz):
            s += Z[j, i, a] * theta[j, a]
        offset[j, i] = s
    return OK


@numba.njit(cache=True)
def _update_eta(j, rng, dat, ps, par, cfg, pri):
    X = dat[5]
    gamma = ps[1]
    eta, omega_eta, counters = par[6], par[10], par[11]
    clamp = cfg[5]
    eta_prec, eta_lin0 = pri[2], pri[3]
    N = gamma.shape[1]
    dx = X.shape[2]
    if dx == 0:
        return OK
    prec = eta_prec.copy()
    lin = eta_lin0.copy()
    for i in range(N):
        psi = 0.0
        for a in range(dx):
            psi += X[j, i, a] * eta[j, a]
        w = pg1(rng, _clamp(psi, clamp, counters))
        omega_eta[j, i] = w
        kap = gamma[j, i] - 0.5
        for a in range(dx):
            lin[a] += X[j, i, a] * kap
            for b in range(dx):
                prec[a, b] += w * X[j, i, a] * X[j, i, b]
    work = np.empty((dx, dx))
    out = np.empty(dx)
    if not mvn_canonical(rng, prec, lin, out, work):
        return NOT_SPD
    for a in range(dx):
        if not math.isfinite(out[a]):
            return NONFINITE
        eta[j, a] = out[a]
    return OK


@numba.njit(cache=True)
def _sweep(rng, dat, ps, par, cfg, pri):
    labels, gamma, customers, tables, dish_tables, dish_size, owner = ps
    temporal = cfg[3]
    J, N = labels.shape
    cap = dish_size.shape[0]
    cand = np.empty(cap, dtype=np.int64)
    logw = np.empty(cap)
    excl = np.zeros(cap, dtype=np.bool_)
    mask = np.empty(cap, dtype=np.bool_)
    for j in range(J):
        if temporal and j > 0:
            for i in range(N):
                _update_gamma(i, j, rng, dat, ps, par, cfg)
        for i in range(N):
            status = _update_cluster(i, j, rng, dat, ps, par, cfg, cand, logw, excl)
            if status != OK:
                return status
        for d in range(cap):
            mask[d] = dish_size[d] > 0
        status = _update_beta(rng, mask, dat, ps, par, cfg)
        if status != OK:
            return status
        status = _update_theta(j, rng, dat, ps, par, cfg, pri)
        if status != OK:
            return status
        if temporal and j > 0:
            status = _update_eta(j, rng, dat, ps, par, cfg, pri)
            if status != OK:
                return status
    return OK


@numba.njit(cache=True)
def _all_loglik(dat, ps, par, cfg, out):
    span, bvals, y, start, Z, X = dat
    labels = ps[0]
    beta, offset, counters = par[0], par[7], par[11]
    clamp = cfg[5]
    J, N = labels.shape
    for j in range(J):
        for i in range(N):
            out[j, i] = _cell_loglik(j * N + i, beta[labels[j, i]], offset[j, i], span, bvals, y, start, clamp, counters)


# ---------------------------------------------------------------------------
# Python-level operations
# ---------------------------------------------------------------------------


def _raise(status: int, where: str) -> None:
    if status != OK:
        raise SamplerError(f"{_STATUS[status]} ({where})")


def update_gamma(i: int, j: int, state: ModelState, ctx: SamplerContext, rng) -> ModelState:
    """Resample the fixed/flexible flag of participant ``i`` into period ``j``.

    P(fixed) is proportional to ``phi_ij`` when fixing ``i`` keeps the reduced
    partitions of periods ``j - 1`` and ``j`` equal (zero otherwise); P(flexible)
    is proportional to ``(1 - phi_ij)`` times the predictive probability of
    ``i``'s current dish given the other fixed participants of period ``j``.
    """
    if not 1 <= j < ctx.J:
        raise ValueError("gamma is only defined for periods after the first")
    _update_gamma(i, j, as_generator(rng), ctx.dat(), state.partition.arrays(), state.params(), ctx.cfg())
    return state


def gamma_weights(i: int, j: int, state: ModelState, ctx: SamplerContext) -> tuple[float, float]:
    """Unnormalised full-conditional weights ``(fixed, flexible)``."""
    if not 1 <= j < ctx.J:
        raise ValueError("gamma is only defined for periods after the first")
    return _gamma_weights(i, j, ctx.X, state.partition.arrays(), state.eta, ctx.cfg())


def update_cluster(i: int, j: int, state: ModelState, ctx: SamplerContext, rng) -> ModelState:
    cap = state.partition.capacity
    status = _update_cluster(
        i, j, as_generator(rng), ctx.dat(), state.partition.arrays(), state.params(), ctx.cfg(),
        np.empty(cap, dtype=np.int64), np.empty(cap), np.zeros(cap, dtype=np.bool_),
    )
    _raise(status, f"cluster update i={i}, j={j}")
    return state


def update_beta_star(d: int, state: ModelState, ctx: SamplerContext, rng, horseshoe: bool = False) -> ModelState:
    """Gibbs update of dish ``d``'s spline coefficients (optionally followed by its horseshoe scales)."""
    if state.partition.dish_size[d] == 0:
        raise ValueError(f"dish {d} has no members")
    gen = as_generator(rng)
    par = state.params()
    if not horseshoe:
        # the kernel always chains the horseshoe step; let it act on scratch copies
        scales = tuple(a.copy() for a in (state.tau2, state.lam2, state.nu_tau, state.nu_lam))
        par = (par[0],) + scales + par[5:]
    mask = np.zeros(state.partition.capacity, dtype=np.bool_)
    mask[d] = True
    status = _update_beta(gen, mask, ctx.dat(), state.partition.arrays(), par, ctx.cfg())
    _raise(status, f"dish {d}")
    return state


def update_horseshoe(d: int, state: ModelState, rng) -> ModelState:
    """Conjugate inverse-gamma updates of dish ``d``'s local/global scales and auxiliaries."""
    _update_horseshoe(as_generator(rng), d, state.beta, state.tau2, state.lam2, state.nu_tau, state.nu_lam)
    return state


def update_theta(j: int, state: ModelState, ctx: SamplerContext, rng) -> ModelState:
    status = _update_theta(j, as_generator(rng), ctx.dat(), state.partition.arrays(), state.params(), ctx.cfg(), ctx.pri())
    _raise(status, f"theta, period {j}")
    return state


def update_eta(j: int, state: ModelState, ctx: SamplerContext, rng) -> ModelState:
    if not 1 <= j < ctx.J:
        raise ValueError("eta is only defined for periods after the first")
    status = _update_eta(j, as_generator(rng), ctx.dat(), state.partition.arrays(), state.params(), ctx.cfg(), ctx.pri())
    _raise(status, f"eta, period {j}")
    return state


def draw_prior_dish(d: int, state: ModelState, rng) -> ModelState:
    _draw_prior_dish(as_generator(rng), d, state.beta, state.tau2, state.lam2, state.nu_tau, state.nu_lam)
    return state


def sweep(state: ModelState, ctx: SamplerContext, rng) -> ModelState:
    """One full pass of the sampler; increments ``state.iteration``."""
    before = int(state.counters[0])
    status = _sweep(as_generator(rng), ctx.dat(), state.partition.arrays(), state.params(), ctx.cfg(), ctx.pri())
    _raise(status, f"sweep {state.iteration + 1}")
    state.iteration += 1
    clamped = int(state.counters[0]) - before
    if clamped:
        log.debug("sweep %d: %d Polya-Gamma tilts clamped to +/-%g", state.iteration, clamped, ctx.clamp)
    return state


def cell_loglik(state: ModelState, ctx: SamplerContext) -> np.ndarray:
    """Log-likelihood of each participant-period's observations, shape (J, N)."""
    out = np.empty((ctx.J, ctx.N))
    _all_loglik(ctx.dat(), state.partition.arrays(), state.params(), ctx.cfg(), out)
    return out
