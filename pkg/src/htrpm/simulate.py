"""Simulation scenarios with known clusters, smooth effects and flags.

Scenario 1 draws each period's partition independently over four trend
functions. Scenario 2 starts from two trends and, at each transition, lets a
logistic draw decide who keeps their trend; everyone else is reseated by a
Chinese-restaurant rule over the trends already in use, with new trends taken
from a library of six.

Design matrices include their constant column, so the baseline design is
``Z = (1, z1, z2)`` and, in scenario 2, the transition design is
``X = (1, x1, x2)``. Scenario 1 has no transition covariates; its ``X`` is the
constant column alone so that temporal variants can still be fitted.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import PanelDataset, validate_dataset
from .rng import RngStream

__all__ = [
    "ScenarioTruth",
    "library_function",
    "generate_scenario1",
    "generate_scenario2",
    "N_DEFAULT",
    "J_DEFAULT",
    "M_DEFAULT",
]

N_DEFAULT, J_DEFAULT, M_DEFAULT = 50, 5, 30
THETA_TRUE = (0.5, -0.5, 0.3)
ALPHA_GEN = 0.1
SIGMA_X = 0.5  # variance of the non-constant scenario-2 covariates
SIGMA_ETA = 0.5


def library_function(k: int, t):
    """Trend ``f_k`` for ``k`` in 1..6, evaluated at ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    if k == 1:
        return 4.0 * np.sin(3.0 * t) - 2.0
    if k == 2:
        return -3.0 * np.sin(3.0 * t) + 1.5
    if k == 3:
        return 3.0 * np.cos(3.0 * t) - 0.5
    if k == 4:
        return -3.0 * np.cos(3.0 * t) + 0.5
    if k == 5:
        return 3.0 * t
    if k == 6:
        return 3.0 * (t - 1.0) ** 2 - 1.0
    raise ValueError(f"library function index must be in 1..6, got {k}")


@dataclass
class ScenarioTruth:
    """Generating values of a simulated panel.

    ``labels[j, i]`` is the trend index (1..6) of participant ``i`` in period
    ``j``; ``smooth`` holds the trend value at every observation, aligned with
    the dataset rows. ``gamma`` row 0 and ``eta`` row 0 are unused (zero).
    """

    scenario: int
    seed: int
    labels: np.ndarray
    smooth: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    mu_eta: float | None = None

    @property
    def fixed_fraction(self) -> float:
        """Share of participants fixed over all transitions."""
        return float(self.gamma[1:].mean())

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "mu_eta": self.mu_eta,
            "labels": self.labels.tolist(),
            "smooth": self.smooth.tolist(),
            "gamma": self.gamma.tolist(),
            "theta": self.theta.tolist(),
            "eta": self.eta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioTruth":
        return cls(
            scenario=int(d["scenario"]),
            seed=int(d["seed"]),
            labels=np.asarray(d["labels"], dtype=np.int64),
            smooth=np.asarray(d["smooth"], dtype=np.float64),
            gamma=np.asarray(d["gamma"], dtype=np.int64),
            theta=np.asarray(d["theta"], dtype=np.float64),
            eta=np.asarray(d["eta"], dtype=np.float64),
            mu_eta=d.get("mu_eta"),
        )

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "ScenarioTruth":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _observe(gen, labels, Z, X, theta, M):
    """Times, outcomes and smooth values for every cell, rows ordered by (period, participant)."""
    J, N = labels.shape
    t = np.sort(gen.uniform(0.0, 1.0, size=(J, N, M)), axis=2)
    smooth = np.empty((J, N, M))
    for k in np.unique(labels):
        mask = labels == k
        smooth[mask] = library_function(int(k), t[mask])
    eta_lin = np.einsum("jid,jd->ji", Z, theta)[:, :, None] + smooth
    y = (gen.uniform(size=eta_lin.shape) < 1.0 / (1.0 + np.exp(-eta_lin))).astype(np.int64)
    jj, ii, _ = np.indices((J, N, M))
    raw = PanelDataset(
        participant_id=(ii + 1).ravel(),
        period=(jj + 1).ravel(),
        time=t.ravel(),
        y=y.ravel(),
        z=np.repeat(Z.reshape(J * N, -1), M, axis=0),
        x=np.repeat(X.reshape(J * N, -1), M, axis=0),
    )
    return validate_dataset(raw, time_range=(0.0, 1.0)), smooth.ravel()


def _baseline_design(gen, J, N, var):
    Z = np.ones((J, N, 3))
    Z[:, :, 1:] = np.sqrt(var) * gen.standard_normal((J, N, 2))
    return Z


def generate_scenario1(seed: int, N: int = N_DEFAULT, J: int = J_DEFAULT, M: int = M_DEFAULT):
    """Independent partitions per period over trends f1..f4 chosen uniformly."""
    gen = RngStream(seed, (1,)).generator
    labels = gen.integers(1, 5, size=(J, N))
    Z = _baseline_design(gen, J, N, 1.0)
    X = np.ones((J, N, 1))
    theta = np.tile(THETA_TRUE, (J, 1))
    data, smooth = _observe(gen, labels, Z, X, theta, M)
    truth = ScenarioTruth(
        scenario=1, seed=int(seed), labels=labels, smooth=smooth,
        gamma=np.zeros((J, N), dtype=np.int64), theta=theta, eta=np.zeros((J, 1)),
    )
    return data, truth


def _reseat(gen, labels_j, fixed, alpha):
    """CRP reallocation of the flexible participants of one period, in index order."""
    counts: dict[int, int] = {}
    for i in np.flatnonzero(fixed):
        counts[int(labels_j[i])] = counts.get(int(labels_j[i]), 0) + 1
    for i in np.flatnonzero(~fixed):
        ks = list(counts)
        w = np.array([counts[k] for k in ks] + [alpha], dtype=np.float64)
        c = gen.choice(w.size, p=w / w.sum())
        if c < len(ks):
            k = ks[c]
        else:
            unused = [k for k in range(1, 7) if k not in counts]
            k = int(gen.choice(unused)) if unused else int(gen.integers(1, 7))
        labels_j[i] = k
        counts[k] = counts.get(k, 0) + 1


def generate_scenario2(seed: int, mu_eta: float, N: int = N_DEFAULT, J: int = J_DEFAULT, M: int = M_DEFAULT,
                       alpha: float = ALPHA_GEN):
    """Temporally dependent partitions driven by logistic fixed/flexible flags.

    The stream depends on ``seed`` only, so different ``mu_eta`` values with the
    same seed share their covariates and uniforms (common random numbers).
    """
    if not np.isfinite(mu_eta):
        raise ValueError("mu_eta must be finite")
    gen = RngStream(seed, (2,)).generator
    Z = _baseline_design(gen, J, N, SIGMA_X)
    X = np.ones((J, N, 3))
    X[:, :, 1:] = np.sqrt(SIGMA_X) * gen.standard_normal((J, N, 2))
    eta = np.zeros((J, 3))
    eta[1:] = mu_eta + np.sqrt(SIGMA_ETA) * gen.standard_normal((J - 1, 3))
    labels = np.empty((J, N), dtype=np.int64)
    gamma = np.zeros((J, N), dtype=np.int64)
    labels[0] = np.where(gen.uniform(size=N) < 0.5, 1, 2)
    for j in range(1, J):
        phi = 1.0 / (1.0 + np.exp(-X[j] @ eta[j]))
        fixed = gen.uniform(size=N) < phi
        gamma[j] = fixed
        labels[j] = labels[j - 1]
        _reseat(gen, labels[j], fixed, alpha)
    theta = np.tile(THETA_TRUE, (J, 1))
    data, smooth = _observe(gen, labels, Z, X, theta, M)
    truth = ScenarioTruth(
        scenario=2, seed=int(seed), labels=labels, smooth=smooth,
        gamma=gamma, theta=theta, eta=eta, mu_eta=float(mu_eta),
    )
    return data, truth


def expected_fixed_fraction(mu_eta: float, n_mc: int = 200_000, seed: int = 0) -> float:
    """Monte Carlo value of E[logistic(X eta)] under the scenario-2 generator."""
    gen = np.random.default_rng(seed)
    x = np.sqrt(SIGMA_X) * gen.standard_normal((n_mc, 2))
    eta = mu_eta + np.sqrt(SIGMA_ETA) * gen.standard_normal((n_mc, 3))
    lin = eta[:, 0] + np.einsum("nk,nk->n", x, eta[:, 1:])
    return float(np.mean(1.0 / (1.0 + np.exp(-lin))))
