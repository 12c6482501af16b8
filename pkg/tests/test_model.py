import numpy as np
import pytest

from htrpm.model import (
    Hyperparameters,
    PanelDataset,
    ValidationError,
    default_hyperparameters,
    validate_dataset,
)


def raw_panel(times=None, y=None, drop=None):
    # 2 participants x 2 periods x 2 observations
    pid = np.repeat([1, 2, 1, 2], 2)
    per = np.repeat([1, 1, 2, 2], 2)
    t = np.array([0.0, 10.0, 5.0, 10.0, 0.0, 2.5, 7.5, 10.0]) if times is None else np.asarray(times)
    yy = np.array([0, 1, 1, 0, 0, 0, 1, 1]) if y is None else np.asarray(y)
    z = np.repeat([[1.0, 0.5], [1.0, -0.5], [1.0, 0.5], [1.0, -0.5]], 2, axis=0)
    x = np.ones((8, 1))
    keep = np.ones(8, bool)
    if drop is not None:
        keep[drop] = False
    return PanelDataset(pid[keep], per[keep], t[keep], yy[keep], z[keep], x[keep])


def test_validate_rescales_times():
    d = validate_dataset(raw_panel())
    assert d.time.min() == 0.0 and d.time.max() == 1.0
    assert d.time_map == (0.0, 10.0)
    np.testing.assert_allclose(d.original_times(), raw_panel().time[np.lexsort((raw_panel().participant_id, raw_panel().period))])
    assert (d.N, d.J) == (2, 2)
    np.testing.assert_array_equal(d.counts, [[2, 2], [2, 2]])
    np.testing.assert_array_equal(d.item_starts(), [0, 2, 4, 6, 8])
    assert d.Z.shape == (2, 2, 2) and d.X.shape == (2, 2, 1)


def test_unit_interval_times_kept():
    t = np.array([0.0, 1.0, 0.5, 1.0, 0.0, 0.25, 0.75, 1.0])
    d = validate_dataset(raw_panel(times=t))
    assert d.time_map == (0.0, 1.0)


def test_declared_time_range():
    d = validate_dataset(raw_panel(), time_range=(0.0, 20.0))
    assert d.time.max() == 0.5
    with pytest.raises(ValidationError, match="outside"):
        validate_dataset(raw_panel(), time_range=(0.0, 5.0))


def test_missing_cell_is_named():
    with pytest.raises(ValidationError, match=r"missing \(i=2, j=2\)"):
        validate_dataset(raw_panel(drop=[6, 7]))


def test_non_binary_outcome():
    with pytest.raises(ValidationError, match="non-binary"):
        validate_dataset(raw_panel(y=[0, 1, 2, 0, 0, 0, 1, 1]))


def test_covariate_not_constant():
    raw = raw_panel()
    raw.z[1, 1] = 9.0
    with pytest.raises(ValidationError, match="constant"):
        validate_dataset(raw)


def test_one_distinct_time():
    with pytest.raises(ValidationError, match="distinct"):
        validate_dataset(raw_panel(times=np.zeros(8)))


def test_dataset_roundtrip_and_fingerprint():
    d = validate_dataset(raw_panel())
    e = PanelDataset.from_dict(d.to_dict())
    assert e.fingerprint() == d.fingerprint()
    np.testing.assert_array_equal(e.time, d.time)
    other = raw_panel()
    other.y[0] = 1
    assert validate_dataset(other).fingerprint() != d.fingerprint()


def test_hyperparameter_validation():
    with pytest.raises(ValidationError):
        Hyperparameters(variant="bogus")
    with pytest.raises(ValidationError):
        Hyperparameters(variant="hdp", alpha0=None)
    with pytest.raises(ValidationError):
        Hyperparameters(sigma_theta=[[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        Hyperparameters(n_iter=10, burnin=10)
    assert Hyperparameters(variant="DP", alpha0=None).variant == "dp"


def test_defaults_and_retained_count():
    h = default_hyperparameters("htrpm")
    assert (h.alpha, h.alpha0, h.Q) == (0.1, 1.0, 10)
    assert h.n_retained == 200
    assert default_hyperparameters("dp").alpha0 is None
    assert default_hyperparameters("htrpm", n_iter=8000).n_retained == 500
    np.testing.assert_array_equal(h.theta_cov(3), np.eye(3))
    np.testing.assert_array_equal(h.eta_cov(2), 5 * np.eye(2))
    np.testing.assert_array_equal(h.eta_mean(2), [0.0, 0.0])


def test_model_fingerprint_ignores_length():
    a = default_hyperparameters("hdp")
    assert a.model_fingerprint() == a.replace(n_iter=9000).model_fingerprint()
    assert a.model_fingerprint() != a.replace(seed=1).model_fingerprint()
    assert Hyperparameters.from_dict(a.to_dict()) == a
    with pytest.raises(ValidationError):
        Hyperparameters.from_dict({"bogus": 1})
