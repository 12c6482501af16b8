"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 1 and 2 fit the full simulation study (5000 sweeps, 3000 burn-in,
thin 10, seeds 1..10). Results are cached by ``htrpm.experiments``; run
``python -m htrpm.experiments`` beforehand to avoid a multi-hour test.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from htrpm import experiments as ex
from htrpm.chain import run_chain
from htrpm.gibbs import build_context, context_from_arrays, draw_prior_dish, initial_state, sweep, update_beta_star, \
    update_eta, update_theta
from htrpm.metrics import adjusted_rand_index, variation_of_information
from htrpm.model import Hyperparameters, default_hyperparameters
from htrpm.partition import PartitionSequence, reduced_partition
from htrpm.rng import RngStream, sample_pg
from htrpm.simulate import generate_scenario2
from htrpm.summary import coclustering, evaluate, salso, waic_from_loglik

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def set_partitions(n):
    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for k in range(top + 2):
            yield from grow(prefix + [k], max(top, k))
    yield from grow([0], 0)


# --- 1: scenario 1 table ----------------------------------------------------------------------


def test_criterion_1_scenario1_table(report):
    runs = ex.run_jobs(ex.scenario1_jobs())
    res = ex.table(runs, by=("variant",))
    cpu_min = sum(r["seconds"] for r in runs) / 60
    ari = {v: res[(v,)]["ari"][0] for v in ex.VARIANTS}
    mse = {v: res[(v,)]["mse_smooth"][0] for v in ex.VARIANTS}
    checks = {
        "ari": all(ari[v] >= 0.90 for v in ("htrpm", "hdp", "dp")) and ari["trpm"] >= 0.85,
        "mse": mse["htrpm"] <= 0.20 and mse["hdp"] <= 0.20,
        "trpm_worst": max(mse, key=mse.get) == "trpm",
    }
    ok = all(checks.values())
    fmt = lambda d: " ".join(f"{k}={v:.3f}" for k, v in d.items())
    # runtime is reported, not asserted: the target assumes four cores
    report(1, ok, f"ARI[{fmt(ari)}] MSE[{fmt(mse)}] {checks} chain time {cpu_min:.0f} min on one core")
    assert ok, checks


# --- 2: scenario 2 trends ---------------------------------------------------------------------


def test_criterion_2_scenario2_trends(report):
    res = ex.table(ex.run_jobs(ex.scenario2_jobs()))
    vi = {(mu, v): res[(mu, v)]["vi"][0] for mu in ex.MU_GRID for v in ex.VARIANTS}
    acc = {mu: res[(mu, "htrpm")]["gamma_accuracy"][0] for mu in ex.MU_GRID}
    checks = {
        "a": vi[(3.0, "htrpm")] <= vi[(3.0, "dp")],
        "b": acc[3.0] > acc[0.0],
        "c": all(vi[(mu, h)] < vi[(mu, f)] for mu in ex.MU_GRID for h in ("htrpm", "hdp") for f in ("trpm", "dp")),
    }
    ok = all(checks.values())
    rows = " ".join(f"mu={mu:+.0f}:" + ",".join(f"{vi[(mu, v)]:.3f}" for v in ex.VARIANTS) for mu in ex.MU_GRID)
    report(2, ok, f"VI(htrpm,hdp,trpm,dp) {rows} gamma-acc " +
           " ".join(f"{mu:+.0f}:{a:.3f}" for mu, a in acc.items()) + f" {checks}")
    assert ok, checks


# --- 3: generator calibration -----------------------------------------------------------------


def test_criterion_3_fixed_fraction_calibration(report):
    rows, ok = [], True
    for mu in ex.MU_GRID:
        c = ex.calibration(mu, 200)
        target = expit(mu)
        hit = abs(c["mean"] - target) <= 3 * c["se"]
        ok &= hit
        rows.append(f"mu={mu:+.0f}: {c['mean']:.3f} vs {target:.3f} (3SE {3 * c['se']:.3f})")
    report(3, ok, "; ".join(rows))
    assert ok


# --- 4: Polya-Gamma moments -------------------------------------------------------------------


def test_criterion_4_polya_gamma_moments(report):
    t0 = time.perf_counter()
    rng = RngStream(2024)
    n, ok, rows = 10**6, True, []
    for z in (0.0, 0.5, 1.0, 2.0, 4.0):
        x = sample_pg(np.full(n, z), rng)
        mean = 0.25 if z == 0 else math.tanh(z / 2) / (2 * z)
        se = x.std(ddof=1) / math.sqrt(n)
        hit = abs(x.mean() - mean) <= 3 * se
        if z == 0:
            # SE of the sample variance from the fourth central moment
            v = x.var(ddof=1)
            m4 = np.mean((x - x.mean()) ** 4)
            hit &= abs(v - 1 / 24) <= 3 * math.sqrt((m4 - v**2) / n)
        ok &= hit
        rows.append(f"z={z}:{x.mean():.5f}/{mean:.5f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 60
    report(4, ok, " ".join(rows) + f" in {elapsed:.1f}s")
    assert ok


# --- 5: oracle equivalence -------------------------------------------------------------------


def _vi_brute(a, b):
    n = len(a)
    ent = lambda lab: -sum(c / n * math.log(c / n) for c in (lab.count(u) for u in set(lab)))
    joint = list(zip(a, b))
    return 2 * ent(joint) - ent(list(a)) - ent(list(b))


def _ari_brute(a, b):
    pairs = list(itertools.combinations(range(len(a)), 2))
    if not pairs:
        return 1.0
    sa = [a[i] == a[j] for i, j in pairs]
    sb = [b[i] == b[j] for i, j in pairs]
    both, na, nb, total = sum(x and y for x, y in zip(sa, sb)), sum(sa), sum(sb), len(pairs)
    expected = na * nb / total
    top = (na + nb) / 2
    return 1.0 if top == expected else (both - expected) / (top - expected)


def _vi_lower_bound(c, psm):
    c = np.asarray(c)
    return np.mean([math.log((c == c[i]).sum()) - 2 * math.log(psm[i, c == c[i]].sum()) + math.log(psm[i].sum())
                    for i in range(c.size)])


def test_criterion_5_oracle_equivalence(report):
    worst_vi = worst_ari = 0.0
    for n in range(1, 6):
        parts = list(set_partitions(n))
        for a, b in itertools.product(parts, parts):
            worst_vi = max(worst_vi, abs(variation_of_information(a, b) - _vi_brute(a, b)))
            worst_ari = max(worst_ari, abs(adjusted_rand_index(a, b) - _ari_brute(a, b)))
    assert len(list(set_partitions(5))) == 52
    parts6 = list(set_partitions(6))
    rng = np.random.default_rng(55)
    hits = 0
    for trial in range(100):
        centres = rng.integers(0, 3, size=(2, 6))
        draws = np.array([np.where(rng.uniform(size=6) < 0.3, rng.integers(0, 4, 6), centres[rng.integers(2)])
                          for _ in range(20)])
        psm = coclustering(draws)
        best = min(_vi_lower_bound(p, psm) for p in parts6)
        hits += _vi_lower_bound(salso(draws, seed=trial), psm) <= best + 1e-12
    ok = worst_vi <= 1e-12 and worst_ari <= 1e-12 and hits >= 95
    report(5, ok, f"max|dVI|={worst_vi:.1e} max|dARI|={worst_ari:.1e} SALSO optimal {hits}/100")
    assert ok


# --- 6: invariants ----------------------------------------------------------------------------


def _crf_conserved(ps: PartitionSequence) -> bool:
    labels = np.asarray(ps.labels)
    J = labels.shape[0]
    for j in range(J):
        counts = np.bincount(labels[j], minlength=ps.capacity)
        if not np.array_equal(counts, ps.customers[j]):
            return False
    if not np.all(ps.customers.sum(axis=1) == labels.shape[1]):
        return False
    tables = (ps.customers > 0).astype(np.int64)
    return bool(np.array_equal(tables, ps.tables)) and bool(np.array_equal(ps.dish_tables, tables.sum(axis=0))) \
        and bool(np.array_equal(ps.customers.sum(axis=0), ps.dish_size))


def _compatible_every_transition(ps: PartitionSequence) -> bool:
    labels, gamma = np.asarray(ps.labels), np.asarray(ps.gamma)
    for j in range(1, labels.shape[0]):
        fixed = np.flatnonzero(gamma[j])
        if not np.array_equal(reduced_partition(labels[j - 1], fixed), reduced_partition(labels[j], fixed)):
            return False
    return True


def _no_data_theta(n=4000):
    hyper = Hyperparameters(variant="dp", alpha0=None, sigma_theta=1.5)
    Z = np.ones((1, 1, 3))
    ctx = context_from_arrays([], np.zeros((0, 1)), [], [[0]], Z, np.zeros((1, 1, 0)), hyper, Q=1)
    state = initial_state(ctx)
    rng = RngStream(61)
    return np.array([update_theta(0, state, ctx, rng).theta[0].copy() for _ in range(n)]), math.sqrt(1.5)


def _no_data_eta(n=4000):
    # no participants, so no transitions inform eta
    hyper = Hyperparameters(variant="trpm", alpha0=None, mu_eta=0.5, sigma_eta=1.0)
    ctx = context_from_arrays([], np.zeros((0, 1)), [], np.zeros((2, 0), int), np.zeros((2, 0, 0)),
                              np.ones((2, 0, 3)), hyper, Q=1)
    state = initial_state(ctx)
    rng = RngStream(63)
    return np.array([update_eta(1, state, ctx, rng).eta[1].copy() for _ in range(n)])


def _no_data_beta(n_iter=60_000, thin=6, Q=3):
    # a dish whose only member has no observations: beta and its horseshoe scales cycle on the prior
    hyper = Hyperparameters(variant="dp", alpha0=None)
    ctx = context_from_arrays([], np.zeros((0, 1)), [], [[0]], np.zeros((1, 1, 0)), np.zeros((1, 1, 0)), hyper, Q=Q)
    state = initial_state(ctx)
    rng = RngStream(65)
    chain = []
    for it in range(n_iter):
        update_beta_star(0, state, ctx, rng, horseshoe=True)
        if it % thin == 0:
            chain.append(state.beta[0].copy())
    chain = np.array(chain[500:])
    fresh = []
    for _ in range(chain.shape[0]):
        draw_prior_dish(1, state, rng)
        fresh.append(state.beta[1].copy())
    return chain, np.array(fresh)


def test_criterion_6_invariants(report):
    data, _ = generate_scenario2(6, 0.0)
    hyper = default_hyperparameters("htrpm")
    ctx = build_context(data, hyper)
    state = initial_state(ctx)
    rng = RngStream(6)
    compat = crf = 0
    for _ in range(200):
        sweep(state, ctx, rng)
        compat += _compatible_every_transition(state.partition)
        crf += _crf_conserved(state.partition)

    pvals = {}
    th, sd = _no_data_theta()
    for a in range(th.shape[1]):
        pvals[f"theta{a}"] = stats.kstest(th[:, a], "norm", args=(0, sd)).pvalue
    et = _no_data_eta()
    for a in range(et.shape[1]):
        pvals[f"eta{a}"] = stats.kstest(et[:, a], "norm", args=(0.5, 1)).pvalue
    bc, bf = _no_data_beta()
    for q in range(bc.shape[1]):
        # log|beta| keeps the horseshoe tails from swamping the statistic
        pvals[f"beta{q}"] = stats.ks_2samp(np.log(np.abs(bc[:, q])), np.log(np.abs(bf[:, q]))).pvalue
    # Bonferroni over the nine marginal tests at family level 0.01
    ks_ok = min(pvals.values()) > 0.01 / len(pvals)
    ok = compat == 200 and crf == 200 and ks_ok
    report(6, ok, f"compatible {compat}/200, CRF counts {crf}/200, min KS p={min(pvals.values()):.3g} "
           + " ".join(f"{k}:{v:.2f}" for k, v in pvals.items()))
    assert ok, pvals


# --- 7: WAIC ---------------------------------------------------------------------------------


def test_criterion_7_waic(report):
    zero = waic_from_loglik(np.full((10, 1), math.log(0.5)))["waic"]
    two = waic_from_loglik(np.log([[0.4], [0.6]]))["waic"]
    rng = np.random.default_rng(7)
    ll = rng.normal(-1.5, 0.4, size=(40, 3, 5))
    whole = waic_from_loglik(ll)["waic"]
    split = waic_from_loglik(ll[:, :1])["waic"] + waic_from_loglik(ll[:, 1:])["waic"]
    ok = abs(zero - 1.3863) <= 1e-4 and abs(two - 1.5507) <= 1e-3 and abs(whole - split) <= 1e-9 * abs(whole)
    report(7, ok, f"zero-variance {zero:.4f}, two-draw {two:.4f}, additivity gap {abs(whole - split):.1e}")
    assert ok


# --- 8: determinism --------------------------------------------------------------------------


def test_criterion_8_determinism(report, tmp_path):
    data, truth = generate_scenario2(8, 3.0, N=15, J=3, M=10)
    hyper = default_hyperparameters("htrpm", n_iter=300, burnin=100, thin=5, seed=8)
    full = run_chain(data, hyper).to_bytes()
    ck = tmp_path / "ck.json.gz"
    run_chain(data, hyper, checkpoint=ck, checkpoint_every=50, stop_after=170)
    resumed = run_chain(data, hyper, checkpoint=ck, resume=True)
    again = run_chain(data, hyper)
    m1 = evaluate(resumed, truth)
    m2 = evaluate(again, truth)
    ok = resumed.to_bytes() == full and again.to_bytes() == full and m1 == m2
    report(8, ok, f"resume byte-identical={resumed.to_bytes() == full}, metrics identical={m1 == m2}")
    assert ok
