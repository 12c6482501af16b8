import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htrpm.chain import run_chain
from htrpm.model import default_hyperparameters
from htrpm.partition import canonical
from htrpm.simulate import generate_scenario2
from htrpm.summary import (
    coclustering,
    estimate_partition,
    evaluate,
    expected_vi_lower_bound,
    salso,
    trajectory_summary,
    transition_table,
    waic,
    waic_from_loglik,
)


def set_partitions(n):
    def grow(prefix, top):
        if len(prefix) == n:
            yield list(prefix)
            return
        for k in range(top + 2):
            yield from grow(prefix + [k], max(top, k))
    yield from grow([0], 0)


def vi_lower_bound(c, psm):
    # (1/n) sum_i [log |c_i| - 2 log sum_{j in c_i} p_ij + log sum_j p_ij]
    c = np.asarray(c)
    n = c.size
    total = 0.0
    for i in range(n):
        same = c == c[i]
        total += math.log(same.sum()) - 2 * math.log(psm[i, same].sum()) + math.log(psm[i].sum())
    return total / n


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30).flatmap(lambda S: st.integers(1, 8).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 3), min_size=n, max_size=n), min_size=S, max_size=S))))
def test_coclustering_invariants(draws):
    p = coclustering(np.array(draws))
    assert np.array_equal(p, p.T)
    assert np.all(np.diag(p) == 1.0)
    assert np.all((p >= 0) & (p <= 1))


def test_salso_identical_draws():
    truth = np.array([0, 0, 1, 2, 1, 2, 2])
    assert np.array_equal(salso(np.tile(truth, (15, 1))), canonical(truth))
    with pytest.raises(ValueError):
        salso(np.empty((0, 4), int))


def test_salso_matches_exhaustive_search():
    parts = [np.array(p) for p in set_partitions(6)]
    assert len(parts) == 203
    rng = np.random.default_rng(0)
    hits = 0
    for trial in range(100):
        centres = rng.integers(0, 3, size=(2, 6))
        draws = np.array([np.where(rng.uniform(size=6) < 0.3, rng.integers(0, 4, 6), centres[rng.integers(2)])
                          for _ in range(20)])
        psm = coclustering(draws)
        best = min(vi_lower_bound(p, psm) for p in parts)
        got = vi_lower_bound(salso(draws, seed=trial), psm)
        hits += got <= best + 1e-12
    assert hits >= 95


def test_salso_restarts_and_draw_candidates():
    rng = np.random.default_rng(1)
    for trial in range(20):
        draws = rng.integers(0, 5, size=(30, 25))
        psm = coclustering(draws)
        one = expected_vi_lower_bound(salso(draws, restarts=1, seed=trial), psm)
        many = expected_vi_lower_bound(salso(draws, restarts=32, seed=trial), psm)
        assert many <= one + 1e-12
        assert one <= min(expected_vi_lower_bound(d, psm) for d in draws) + 1e-12


def test_loss_orders_like_the_oracle():
    rng = np.random.default_rng(2)
    draws = rng.integers(0, 3, size=(10, 6))
    psm = coclustering(draws)
    parts = [np.array(p) for p in set_partitions(6)]
    ours = np.array([expected_vi_lower_bound(p, psm) for p in parts])
    ref = np.array([vi_lower_bound(p, psm) for p in parts])
    assert np.argmin(ours) == np.argmin(ref)
    assert np.corrcoef(ours, ref)[0, 1] > 0.999


def test_estimate_partition_scopes():
    draws = np.array([[[0, 0, 1], [0, 0, 1]]] * 5)
    hier = estimate_partition(draws, hierarchical=True)
    assert hier[0, 0] == hier[1, 0]
    flat = estimate_partition(draws, hierarchical=False)
    assert not set(flat[0]) & set(flat[1])


def test_waic_zero_variance():
    res = waic_from_loglik(np.full((10, 1), math.log(0.5)))
    assert res["lppd"] == pytest.approx(math.log(0.5))
    assert res["p_waic"] == pytest.approx(0.0, abs=1e-15)
    assert res["waic"] == pytest.approx(1.3863, abs=1e-4)


def test_waic_two_draw_hand_computation():
    res = waic_from_loglik(np.log([[0.4], [0.6]]))
    assert res["lppd"] == pytest.approx(math.log(0.5))
    assert res["p_waic"] == pytest.approx(math.log(1.5) ** 2 / 2)
    assert res["p_waic"] == pytest.approx(0.0822, abs=1e-4)
    assert res["waic"] == pytest.approx(1.5507, abs=1e-4)


def test_waic_additive_and_order_invariant():
    rng = np.random.default_rng(3)
    ll = rng.normal(-2, 0.3, size=(50, 4, 6))
    it = np.arange(50) * 10
    whole = waic_from_loglik(ll, 0.2, it)
    parts = waic_from_loglik(ll[:, :2], 0.2, it)["waic"] + waic_from_loglik(ll[:, 2:], 0.2, it)["waic"]
    assert whole["waic"] == pytest.approx(parts)
    perm = rng.permutation(50)
    assert waic_from_loglik(ll[perm], 0.2, it[perm]) == whole
    assert whole["n_draws"] == 10
    with pytest.raises(ValueError):
        waic_from_loglik(ll[:1])


def test_transition_tables():
    est = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [1, 2, 2, 2]])
    tables = transition_table(est)
    assert len(tables) == 2
    labs, t = tables[0]
    np.testing.assert_array_equal(t, np.diag([2, 2]))
    labs, t = tables[1]
    np.testing.assert_array_equal(t, [[1, 1], [0, 2]])
    assert t.sum() - np.trace(t) == 1
    for j, (labs, t) in enumerate(tables):
        sizes = [np.sum(est[j] == k) for k in labs]
        np.testing.assert_array_equal(t.sum(axis=1), sizes)


@pytest.fixture(scope="module")
def small_fit():
    data, truth = generate_scenario2(5, 3.0, N=8, J=3, M=10)
    arch = run_chain(data, default_hyperparameters("htrpm", n_iter=120, burnin=60, thin=3))
    return arch, truth


def test_trajectories(small_fit):
    arch, _ = small_fit
    est = estimate_partition(arch.labels, True)
    traj = trajectory_summary(arch, est)
    assert sum(r["size"] for r in traj) == est.size
    assert all(r["mean"].shape == (101,) for r in traj)
    assert all(np.all(r["lower"] <= r["upper"]) for r in traj)
    odds = [r["avg_log_odds"] for r in traj]
    assert odds == sorted(odds, reverse=True)
    with pytest.raises(ValueError):
        trajectory_summary(arch, est, grid=[0.0, 1.5])


def test_constant_coefficients_give_zero_width_band(small_fit):
    arch = copy.deepcopy(small_fit[0])
    for d in arch.draws:
        d["beta"] = [[0.7] * arch.header["Q"] for _ in d["beta"]]
    est = estimate_partition(arch.labels, True)
    for r in trajectory_summary(arch, est, grid=np.linspace(0, 1, 11)):
        np.testing.assert_allclose(r["upper"] - r["lower"], 0.0, atol=1e-12)
        np.testing.assert_allclose(r["mean"], 0.7)


def test_evaluate_and_waic(small_fit):
    arch, truth = small_fit
    res = evaluate(arch, truth)
    assert {"vi", "ari", "mse_smooth", "vi_global", "ari_global", "gamma_accuracy"} <= set(res)
    assert len(res["vi_by_period"]) == 3
    assert 0 <= res["gamma_accuracy"] <= 1
    w = waic(arch)
    assert w["n_draws"] == 2 and np.isfinite(w["waic"])
    bad = type(truth)(**{**truth.__dict__, "labels": truth.labels[:, :-1]})
    with pytest.raises(ValueError):
        evaluate(arch, bad)
