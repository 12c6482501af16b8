"""Core data types: panel data, hyperparameters and the sampler state."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .partition import PartitionSequence

__all__ = [
    "ValidationError",
    "PanelDataset",
    "Hyperparameters",
    "ModelState",
    "VARIANTS",
    "validate_dataset",
    "default_hyperparameters",
]

VARIANTS = ("htrpm", "trpm", "hdp", "dp")
_VARIANT_NAMES = {"htrpm": "htRPM", "trpm": "tRPM", "hdp": "HDP", "dp": "DP"}


class ValidationError(ValueError):
    """Input data or configuration violates a model assumption."""


@dataclass
class PanelDataset:
    """Long-format binary panel: one row per observation.

    ``z`` and ``x`` hold the baseline and transition covariates repeated on
    every row of a participant-period; they must be constant within it. After
    :func:`validate_dataset` the rows are ordered by (period, participant),
    times lie in [0, 1] and the per-cell arrays ``Z``/``X`` (shape ``(J, N, d)``)
    and index arrays are filled in.
    """

    participant_id: np.ndarray
    period: np.ndarray
    time: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    time_map: tuple[float, float] | None = None

    participants: np.ndarray = field(default=None, repr=False)
    periods: np.ndarray = field(default=None, repr=False)
    ii: np.ndarray = field(default=None, repr=False)
    jj: np.ndarray = field(default=None, repr=False)
    Z: np.ndarray = field(default=None, repr=False)
    X: np.ndarray = field(default=None, repr=False)

    @property
    def validated(self) -> bool:
        return self.time_map is not None

    @property
    def n_obs(self) -> int:
        return int(self.y.shape[0])

    @property
    def N(self) -> int:
        return int(self.participants.size)

    @property
    def J(self) -> int:
        return int(self.periods.size)

    @property
    def dz(self) -> int:
        return int(self.z.shape[1])

    @property
    def dx(self) -> int:
        return int(self.x.shape[1])

    @property
    def counts(self) -> np.ndarray:
        """Observation counts ``M[j, i]``."""
        M = np.zeros((self.J, self.N), dtype=np.int64)
        np.add.at(M, (self.jj, self.ii), 1)
        return M

    def item_starts(self) -> np.ndarray:
        """Row offsets of cell ``k = j * N + i`` (rows are sorted by cell)."""
        return np.concatenate([[0], np.cumsum(self.counts.ravel())]).astype(np.int64)

    def original_times(self, t=None) -> np.ndarray:
        lo, hi = self.time_map
        t = self.time if t is None else np.asarray(t, dtype=np.float64)
        return lo + t * (hi - lo)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.participant_id, self.period, self.time, self.y, self.z, self.x):
            arr = np.ascontiguousarray(a)
            h.update(str(arr.dtype).encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        h.update(json.dumps(self.time_map).encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id.tolist(),
            "period": self.period.tolist(),
            "time": self.time.tolist(),
            "y": self.y.tolist(),
            "z": self.z.tolist(),
            "x": self.x.tolist(),
            "dz": self.dz,
            "dx": self.dx,
            "time_map": None if self.time_map is None else list(self.time_map),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PanelDataset":
        n = len(data["y"])
        raw = cls(
            participant_id=np.asarray(data["participant_id"]),
            period=np.asarray(data["period"]),
            time=np.asarray(data["time"], dtype=np.float64),
            y=np.asarray(data["y"], dtype=np.int64),
            z=np.asarray(data["z"], dtype=np.float64).reshape(n, data["dz"]),
            x=np.asarray(data["x"], dtype=np.float64).reshape(n, data["dx"]),
        )
        if data.get("time_map") is None:
            return raw
        # already-validated data: re-derive indices without rescaling again
        return validate_dataset(raw, time_range=(0.0, 1.0), _time_map=tuple(data["time_map"]))


def validate_dataset(raw: PanelDataset, time_range: tuple[float, float] | None = None, _time_map=None) -> PanelDataset:
    """Check model assumptions and return an indexed copy with times in [0, 1].

    Times are mapped affinely with ``time_range = (lo, hi)``; by default data
    already inside [0, 1] is left unchanged and anything else is min-max
    scaled. The map is kept in ``time_map`` for reporting in original units.
    """
    pid = np.asarray(raw.participant_id)
    per = np.asarray(raw.period)
    t = np.asarray(raw.time, dtype=np.float64)
    y = np.asarray(raw.y)
    z = np.asarray(raw.z, dtype=np.float64)
    x = np.asarray(raw.x, dtype=np.float64)
    n = y.shape[0]
    if n == 0:
        raise ValidationError("dataset has no observations")
    if z.ndim != 2 or x.ndim != 2 or z.shape[0] != n or x.shape[0] != n or pid.shape[0] != n or per.shape[0] != n or t.shape[0] != n:
        raise ValidationError("inconsistent covariate dimension or column lengths")
    if not np.all(np.isfinite(t)):
        raise ValidationError("non-finite observation time")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("non-binary outcome")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
        raise ValidationError("non-finite covariate value")
    if np.unique(t).size < 2:
        raise ValidationError("need at least 2 distinct time values")

    participants, ii = np.unique(pid, return_inverse=True)
    periods, jj = np.unique(per, return_inverse=True)
    N, J = participants.size, periods.size
    present = np.zeros((J, N), dtype=bool)
    present[jj, ii] = True
    if not present.all():
        j, i = np.argwhere(~present)[0]
        raise ValidationError(f"missing (i={participants[i]}, j={periods[j]})")

    order = np.lexsort((ii, jj))
    Z = np.zeros((J, N, z.shape[1]))
    X = np.zeros((J, N, x.shape[1]))
    Z[jj, ii] = z
    X[jj, ii] = x
    if not (np.array_equal(Z[jj, ii], z) and np.array_equal(X[jj, ii], x)):
        raise ValidationError("covariates must be constant within each participant-period")

    if _time_map is not None:
        lo, hi = 0.0, 1.0
        time_map = _time_map
    else:
        if time_range is None:
            lo, hi = (0.0, 1.0) if (t.min() >= 0.0 and t.max() <= 1.0) else (float(t.min()), float(t.max()))
        else:
            lo, hi = map(float, time_range)
        if not hi > lo:
            raise ValidationError("time range must have positive length")
        time_map = (lo, hi)
    ts = (t - lo) / (hi - lo)
    if ts.min() < 0.0 or ts.max() > 1.0:
        raise ValidationError("observation times fall outside the declared time range")

    return PanelDataset(
        participant_id=pid[order],
        period=per[order],
        time=ts[order],
        y=y[order].astype(np.int64),
        z=z[order],
        x=x[order],
        time_map=time_map,
        participants=participants,
        periods=periods,
        ii=ii[order].astype(np.int64),
        jj=jj[order].astype(np.int64),
        Z=Z,
        X=X,
    )


def _as_matrix(value, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.shape != (dim, dim):
        raise ValidationError(f"{name} must be a scalar or a {dim}x{dim} matrix")
    return arr


def _check_spd(value, name: str) -> None:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        if not arr > 0:
            raise ValidationError(f"{name} must be positive")
        return
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or not np.allclose(arr, arr.T):
        raise ValidationError(f"{name} must be a symmetric matrix")
    if np.linalg.eigvalsh(arr).min() <= 0:
        raise ValidationError(f"{name} is not positive definite")


def _freeze(value):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr)
    return tuple(_freeze(v) for v in arr)


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings and MCMC controls.

    Covariance-type entries accept a positive scalar (times the identity) or a
    full matrix; ``mu_eta`` accepts a scalar (broadcast) or a vector.
    """

    variant: str = "htrpm"
    Q: int = 10
    alpha: float = 0.1
    alpha0: float | None = 1.0
    sigma_theta: float | tuple = 1.0
    mu_eta: float | tuple = 0.0
    sigma_eta: float | tuple = 5.0
    n_iter: int = 5000
    burnin: int = 3000
    thin: int = 10
    seed: int = 0
    waic_fraction: float = 0.10
    n_aux: int = 3
    clamp: float = 35.0

    def __post_init__(self):
        v = str(self.variant).lower()
        if v not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        object.__setattr__(self, "variant", v)
        for name in ("sigma_theta", "mu_eta", "sigma_eta"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if int(self.Q) != self.Q or self.Q < 4:
            raise ValidationError("Q must be an integer >= 4 for a cubic basis")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if self.hierarchical:
            if self.alpha0 is None or not self.alpha0 > 0:
                raise ValidationError("alpha0 must be positive for hierarchical variants")
        elif self.alpha0 is not None and not self.alpha0 > 0:
            raise ValidationError("alpha0 must be positive when given")
        _check_spd(self.sigma_theta, "sigma_theta")
        _check_spd(self.sigma_eta, "sigma_eta")
        if not np.all(np.isfinite(np.asarray(self.mu_eta))):
            raise ValidationError("mu_eta must be finite")
        if not (self.n_iter >= 1 and 0 <= self.burnin < self.n_iter and self.thin >= 1):
            raise ValidationError("need n_iter >= 1, 0 <= burnin < n_iter and thin >= 1")
        if not 0 < self.waic_fraction <= 1:
            raise ValidationError("waic_fraction must lie in (0, 1]")
        if self.n_aux < 1:
            raise ValidationError("n_aux must be at least 1")
        if not self.clamp > 0:
            raise ValidationError("clamp must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def hierarchical(self) -> bool:
        return self.variant in ("htrpm", "hdp")

    @property
    def temporal(self) -> bool:
        return self.variant in ("htrpm", "trpm")

    @property
    def display_name(self) -> str:
        return _VARIANT_NAMES[self.variant]

    @property
    def n_retained(self) -> int:
        return (self.n_iter - self.burnin) // self.thin

    def theta_cov(self, dz: int) -> np.ndarray:
        return _as_matrix(self.sigma_theta, dz, "sigma_theta")

    def eta_cov(self, dx: int) -> np.ndarray:
        return _as_matrix(self.sigma_eta, dx, "sigma_eta")

    def eta_mean(self, dx: int) -> np.ndarray:
        mu = np.asarray(self.mu_eta, dtype=np.float64)
        if mu.ndim == 0:
            return np.full(dx, float(mu))
        if mu.shape != (dx,):
            raise ValidationError(f"mu_eta must be a scalar or length-{dx} vector")
        return mu

    def replace(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**data)

    def model_fingerprint(self) -> str:
        """Hash of everything that shapes the chain except its length."""
        d = self.to_dict()
        d.pop("n_iter")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def default_hyperparameters(variant: str = "htrpm", **overrides) -> Hyperparameters:
    """Simulation-study defaults: alpha 0.1, alpha0 1, theta ~ N(0, I), eta ~ N(0, 5I)."""
    v = str(variant).lower()
    base = dict(variant=v, alpha0=1.0 if v in ("htrpm", "hdp") else None)
    base.update(overrides)
    return Hyperparameters(**base)


@dataclass
class ModelState:
    """All sampled quantities.

    Dish parameters are stored in slots indexed like the partition's dish
    labels; only slots with members are meaningful. Horseshoe scales are kept
    as variances (``tau2``, ``lam2``). ``offset[j, i]`` caches ``Z_ij theta_j``.
    The ``omega_*`` arrays keep the most recent Polya-Gamma latents of each
    conditional update.
    """

    partition: PartitionSequence
    beta: np.ndarray
    tau2: np.ndarray
    lam2: np.ndarray
    nu_tau: np.ndarray
    nu_lam: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    offset: np.ndarray
    omega_beta: np.ndarray
    omega_theta: np.ndarray
    omega_eta: np.ndarray
    counters: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    iteration: int = 0

    _ARRAYS = ("beta", "tau2", "lam2", "nu_tau", "nu_lam", "theta", "eta", "offset",
               "omega_beta", "omega_theta", "omega_eta", "counters")

    @property
    def n_dishes(self) -> int:
        return self.partition.n_dishes

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.partition.dish_size)

    def params(self) -> tuple:
        return tuple(getattr(self, name) for name in self._ARRAYS)

    def copy(self) -> "ModelState":
        return ModelState(self.partition.copy(), *(a.copy() for a in self.params()), iteration=self.iteration)

    def check(self) -> None:
        self.partition.check()
        act = self.active
        assert np.all(np.isfinite(self.beta[act])), "non-finite dish coefficients"
        for name in ("tau2", "lam2", "nu_tau", "nu_lam"):
            assert np.all(getattr(self, name)[act] > 0), f"non-positive {name}"

    def to_arrays(self) -> dict:
        out = {name: getattr(self, name) for name in self._ARRAYS}
        for k, a in zip(("labels", "gamma", "customers", "tables", "dish_tables", "dish_size", "owner"), self.partition.arrays()):
            out["ps_" + k] = a
        out["ps_hierarchical"] = np.array(self.partition.hierarchical)
        out["iteration"] = np.array(self.iteration)
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "ModelState":
        ps = PartitionSequence(
            *(np.array(arrays["ps_" + k]) for k in ("labels", "gamma", "customers", "tables", "dish_tables", "dish_size", "owner")),
            hierarchical=bool(arrays["ps_hierarchical"]),
        )
        return cls(ps, *(np.array(arrays[name]) for name in cls._ARRAYS), iteration=int(arrays["iteration"]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelState):
            return NotImplemented
        return (
            self.iteration == other.iteration
            and self.partition == other.partition
            and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
        )
