import warnings

import numpy as np
import pytest

from gpdphs.errors import ExtrapolationWarning, NotTrainedError
from gpdphs.grid import make_grid
from gpdphs.pipeline import (
    DerivativeDataset,
    FieldGP,
    ObservationSet,
    build_dataset,
    fit_field_gps,
    strided_indices,
    time_derivative,
    upsample,
)


def field_obs(f, t, z, g=None):
    T, Z = np.meshgrid(t, z, indexing="ij")
    vals = [f(T, Z), (g or f)(T, Z)]
    return ObservationSet(t, z, np.stack(vals))


@pytest.fixture(scope="module")
def sincos():
    t = np.linspace(0, 6, 30)
    z = np.linspace(0, np.pi, 15)
    obs = field_obs(lambda T, Z: np.sin(T) * np.cos(Z), t, z)
    return fit_field_gps(obs, 1, seed=0, restarts=2)


def test_stride_counts_at_experiment_scale():
    assert strided_indices(2000, 50).size == 40
    assert strided_indices(2001, 50).size == 41
    t = np.arange(2000) * 0.01
    z = np.linspace(0, 10, 8)
    idx = strided_indices(t.size, 50)
    assert idx.size * z.size == 320
    with pytest.raises(ValueError):
        strided_indices(10, 0)


def test_observation_set_validation():
    with pytest.raises(ValueError):
        ObservationSet([0.0], [0.0, 1.0], np.zeros((2, 1, 2)))
    with pytest.raises(ValueError):
        ObservationSet([0.0, 1.0], [0.0, 1.0], np.zeros((2, 3, 2)))
    obs = ObservationSet([0.0, 1.0], [0.0, 1.0], np.zeros((2, 2, 2)))
    assert obs.u.shape == (2, 0)


def test_constant_field():
    t = np.linspace(0, 2, 8)
    z = np.linspace(0, 1, 5)
    fgp = fit_field_gps(field_obs(lambda T, Z: 0 * T + 2.5, t, z), restarts=1)
    T, Z = np.meshgrid(np.linspace(0, 2, 7), np.linspace(0, 1, 6), indexing="ij")
    assert np.max(np.abs(fgp.mean(T, Z, 0) - 2.5)) < 1e-3
    m, v = time_derivative(fgp, T, Z, 0)
    assert np.max(np.abs(m)) < 1e-3
    assert np.all(v >= 0)


def test_linear_field_mean():
    t = np.linspace(0, 1, 10)
    z = np.linspace(0, 1, 5)
    fgp = fit_field_gps(field_obs(lambda T, Z: T + Z, t, z), restarts=2)
    T, Z = np.meshgrid(np.linspace(0.05, 0.95, 9), np.linspace(0.05, 0.95, 9), indexing="ij")
    assert np.max(np.abs(fgp.mean(T, Z, 0) - (T + Z))) < 1e-2


def test_linear_in_time_derivative():
    t = np.linspace(0, 2, 12)
    z = np.linspace(0, 1, 5)
    fgp = fit_field_gps(field_obs(lambda T, Z: T + 0 * Z, t, z), restarts=2)
    T, Z = np.meshgrid(np.linspace(0.2, 1.8, 9), np.linspace(0, 1, 5), indexing="ij")
    m, _ = time_derivative(fgp, T, Z, 0)
    assert np.max(np.abs(m - 1.0)) < 0.05


def test_sincos_derivative_rmse(sincos):
    T, Z = np.meshgrid(np.linspace(0, 6, 30), np.linspace(0, np.pi, 15), indexing="ij")
    m, v = time_derivative(sincos, T, Z, 0)
    assert np.sqrt(np.mean((m - np.cos(T) * np.cos(Z)) ** 2)) < 0.05
    assert np.all(np.isfinite(v)) and np.all(v >= 0)


def test_derivative_matches_finite_difference(sincos, rng):
    t = rng.uniform(0.5, 5.5, 50)
    z = rng.uniform(0, np.pi, 50)
    h = 1e-4
    fd = (sincos.mean(t + h, z, 0) - sincos.mean(t - h, z, 0)) / (2 * h)
    m, _ = time_derivative(sincos, t, z, 0)
    assert np.max(np.abs(m - fd)) < 1e-4


def test_derivative_variance_formula(sincos):
    # at a far-away time the variance reverts to the prior sigma_f^2 / phi_t^2
    gp = sincos.gps[0]
    _, v = time_derivative(sincos, np.array([1e4]), np.array([1.0]), 0)
    assert v[0] == pytest.approx(gp.hyper.sigma_f**2 / gp.hyper.lengthscales[0] ** 2, rel=1e-10)


def test_upsample_to_eval_grid():
    t = np.linspace(0, 1, 6)
    z = np.linspace(0, 10, 8)
    fgp = fit_field_gps(field_obs(lambda T, Z: np.sin(np.pi * Z / 10) + 0 * T, t, z), restarts=2)
    out = upsample(fgp, make_grid(10, 400), 0.5)
    assert out.shape == (2, 400)
    fine = make_grid(10, 101)
    out = upsample(fgp, fine, 0.5)
    assert np.sqrt(np.mean((out[0] - np.sin(np.pi * fine.nodes / 10)) ** 2)) < 0.05


def test_upsample_reproduces_observations_with_tiny_noise(rng):
    t = np.linspace(0, 1, 5)
    z = np.linspace(0, 10, 8)
    vals = rng.normal(size=(5, 8))
    obs = ObservationSet(t, z, np.stack([vals, vals]))
    bounds = np.array([[1.0, 1.0], [0.3, 0.3], [2.0, 2.0], [1e-8, 1e-8]])
    fgp = fit_field_gps(obs, bounds=bounds, restarts=1)
    out = upsample(fgp, make_grid(10, 8), t[2])
    np.testing.assert_allclose(out[0], vals[2], atol=1e-6)


def test_upsample_within_three_sigma(rng):
    t = np.linspace(0, 2, 10)
    z = np.linspace(0, 10, 8)
    T, Z = np.meshgrid(t, z, indexing="ij")
    vals = np.sin(T) * np.cos(Z / 3) + 1e-3 * rng.normal(size=T.shape)
    fgp = fit_field_gps(ObservationSet(t, z, np.stack([vals, vals])), restarts=2)
    m, v = fgp.mean_var(T, Z, 0)
    sn = fgp.gps[0].hyper.sigma_n
    assert np.all(np.abs(m - vals) <= 3 * np.sqrt(v + sn**2))


def test_upsample_extrapolation_warns():
    t = np.linspace(0, 1, 5)
    z = np.linspace(0, 1, 4)
    fgp = fit_field_gps(field_obs(lambda T, Z: T * Z, t, z), restarts=1)
    with pytest.warns(ExtrapolationWarning):
        out = upsample(fgp, make_grid(1, 10), 100.0)
    assert out.shape == (2, 10)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        upsample(fgp, make_grid(1, 10), 0.5)


def test_untrained_field_gp():
    fgp = FieldGP((), np.zeros(0), (0.0, 1.0))
    with pytest.raises(NotTrainedError):
        fgp.mean(0.0, 0.0, 0)
    with pytest.raises(NotTrainedError):
        time_derivative(fgp, 0.0, 0.0, 0)


def test_empty_strided_set():
    obs = ObservationSet([0.0, 1.0], [0.0, 1.0], np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        fit_field_gps(obs, stride=0)


@pytest.fixture(scope="module")
def string_like():
    t = np.arange(0, 20.01, 0.25)
    z = np.linspace(0, 10, 8)
    obs = field_obs(lambda T, Z: 0.3 * np.sin(T) * np.sin(Z), t, z, lambda T, Z: np.cos(0.5 * T) * np.cos(Z / 4))
    return fit_field_gps(obs, 2, seed=0, restarts=1), t[::2]


def test_build_dataset_shapes(string_like):
    fgp, times = string_like
    ds = build_dataset(fgp, make_grid(10, 30), times[:40])
    assert ds.X.shape == ds.Xdot.shape == ds.V.shape == (40, 60)
    assert np.all(ds.V >= 0) and np.all(np.isfinite(ds.V))
    assert len(ds) == 40


def test_build_dataset_rows_exchangeable(string_like):
    fgp, times = string_like
    learn = make_grid(10, 30)
    ts = times[:10]
    perm = np.random.default_rng(0).permutation(10)
    a = build_dataset(fgp, learn, ts)
    b = build_dataset(fgp, learn, ts[perm])
    for name in ("X", "Xdot", "V", "times"):
        np.testing.assert_allclose(getattr(b, name), getattr(a, name)[perm], rtol=1e-12, atol=1e-14)


def test_build_dataset_zero_trajectory():
    t = np.linspace(0, 2, 6)
    z = np.linspace(0, 10, 8)
    fgp = fit_field_gps(field_obs(lambda T, Z: 0 * T, t, z), restarts=1)
    ds = build_dataset(fgp, make_grid(10, 12), t[1:4])
    np.testing.assert_allclose(ds.X, 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.Xdot, 0.0, atol=1e-9)


def test_build_dataset_errors(string_like):
    fgp, times = string_like
    with pytest.raises(ValueError):
        build_dataset(fgp, make_grid(10, 30), [])
    with pytest.raises(ValueError):
        build_dataset(fgp, make_grid(10, 30), [times[-1] + 5.0])


def test_dataset_validation():
    g = make_grid(1, 3)
    with pytest.raises(ValueError):
        DerivativeDataset(g, [0.0], np.zeros((1, 6)), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        DerivativeDataset(g, [0.0], np.zeros((1, 6)), np.zeros((1, 6)), -np.ones((1, 6)))
    with pytest.raises(ValueError):
        DerivativeDataset(g, [0.0], np.full((1, 6), np.nan), np.zeros((1, 6)))
    ds = DerivativeDataset(g, [0.0, 1.0], np.zeros((2, 6)), np.ones((2, 6)))
    assert ds.subset([1]).Xdot.shape == (1, 6)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0
