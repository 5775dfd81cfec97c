import numpy as np
import pytest

from diffusion_forecast.baselines import (
    AffineModel,
    GaussianState,
    _affine_least_squares,
    ensemble_forecast,
    fit_local_affine,
    iterated_local_linear_forecast,
    local_linear_forecast,
)
from diffusion_forecast.dataset import TimeSeries
from diffusion_forecast.simulators import ODEModel, SDEModel, lorenz_model, simulate_lorenz63


def affine_trajectory(linear, offset, x0, n):
    dim = len(offset)
    out = np.empty((n, dim))
    x = np.asarray(x0, dtype=float)
    for i in range(n):
        out[i] = x
        x = linear @ x + offset
    return TimeSeries(out, tau=1.0)


def spiral_series(n=200):
    rot = 0.93 * np.array([[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]])
    return affine_trajectory(rot, np.array([0.3, -0.1]), [4.0, 0.0], n), rot, np.array([0.3, -0.1])


class TestLocalLinear:
    def test_recovers_scalar_affine_map(self):
        train = affine_trajectory(np.array([[2.0]]), np.array([1.0]), [1e-3], 20)
        model = fit_local_affine(train, np.array([0.5]), 1, k=15)
        assert model.linear[0, 0] == pytest.approx(2.0, abs=1e-10)
        assert model.offset[0] == pytest.approx(1.0, abs=1e-10)
        init = GaussianState.isotropic(np.array([0.5]), 0.0)
        out = local_linear_forecast(train, init, 1, k=15)
        assert out.mean[0] == pytest.approx(2.0, abs=1e-9)

    def test_exact_on_spiral_at_every_lead(self):
        train, rot, off = spiral_series()
        init = GaussianState.isotropic(np.array([2.0, 1.0]), 0.04)
        for lead in (1, 3, 7):
            expected_mean = init.mean.copy()
            lin = np.eye(2)
            for _ in range(lead):
                expected_mean = rot @ expected_mean + off
                lin = rot @ lin
            out = local_linear_forecast(train, init, lead, k=15)
            assert np.allclose(out.mean, expected_mean, atol=1e-9)
            assert np.allclose(out.cov, lin @ init.cov @ lin.T, atol=1e-9)

    def test_lead_zero_identity(self):
        train, _, _ = spiral_series()
        init = GaussianState.isotropic(np.array([1.0, 1.0]), 0.2)
        out = local_linear_forecast(train, init, 0)
        assert np.array_equal(out.mean, init.mean)
        assert np.array_equal(out.cov, init.cov)

    def test_zero_covariance_stays_zero(self):
        train, _, _ = spiral_series()
        init = GaussianState.isotropic(np.array([1.0, 1.0]), 0.0)
        out = local_linear_forecast(train, init, 2)
        assert np.allclose(out.cov, 0.0)

    def test_iterated_equals_direct_on_affine_truth(self):
        train, _, _ = spiral_series()
        init = GaussianState.isotropic(np.array([2.0, -1.0]), 0.09)
        for lead in (1, 4, 8):
            a = local_linear_forecast(train, init, lead)
            b = iterated_local_linear_forecast(train, init, lead)
            assert np.allclose(a.mean, b.mean, atol=1e-8)
            assert np.allclose(a.cov, b.cov, atol=1e-8)

    def test_single_step_methods_identical(self):
        rng = np.random.default_rng(3)
        train = TimeSeries(rng.normal(size=(80, 2)), tau=1.0)
        init = GaussianState.isotropic(rng.normal(size=2), 0.01)
        a = local_linear_forecast(train, init, 1)
        b = iterated_local_linear_forecast(train, init, 1)
        assert np.allclose(a.mean, b.mean)
        assert np.allclose(a.cov, b.cov)

    def test_neighbor_order_does_not_matter(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(15, 3))
        y = rng.normal(size=(15, 3))
        base = _affine_least_squares(x, y)
        perm = rng.permutation(15)
        shuffled = _affine_least_squares(x[perm], y[perm])
        assert np.allclose(base.linear, shuffled.linear)
        assert np.allclose(base.offset, shuffled.offset)

    def test_degenerate_neighbors_flagged(self):
        x = np.ones((10, 2))
        y = np.ones((10, 2))
        model = _affine_least_squares(x, y)
        assert model.degenerate
        assert np.all(np.isfinite(model.linear))

    def test_no_lookahead_leakage(self):
        # neighbors whose shifted partner would leave the block are excluded
        train = affine_trajectory(np.array([[1.1]]), np.array([0.0]), [1.0], 16)
        last = train.points[-1, 0]
        model = fit_local_affine(train, np.array([last]), 2, k=14)
        assert np.all(np.isfinite(model.linear))
        with pytest.raises(ValueError, match="usable"):
            fit_local_affine(train, np.array([last]), 2, k=15)

    def test_lorenz_iterated_covariance_inflates(self):
        ts = simulate_lorenz63(n_samples=3000, dt_sample=0.1, seed=2)
        clim_var = ts.points.var(axis=0).mean()
        init = GaussianState.isotropic(ts.points[1500], 0.01)
        traces = []
        for lead in (5, 30, 60):
            out = iterated_local_linear_forecast(ts, init, lead, k=15)
            traces.append(np.trace(out.cov) / 3.0)
        assert traces[0] < traces[1] < traces[2]
        assert traces[2] > clim_var  # chained linearizations overshoot climatology


class TestGaussianState:
    def test_symmetry_enforced(self):
        with pytest.raises(ValueError, match="symmetric"):
            GaussianState(mean=np.zeros(2), cov=np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_psd_enforced(self):
        with pytest.raises(ValueError, match="semidefinite"):
            GaussianState(mean=np.zeros(2), cov=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_isotropic_builder(self):
        g = GaussianState.isotropic(np.array([1.0, 2.0]), 0.25)
        assert np.array_equal(g.cov, 0.25 * np.eye(2))


class TestEnsembleForecast:
    def test_frozen_dynamics_keeps_moments(self):
        model = SDEModel(
            dim=2,
            drift=lambda x: np.zeros_like(x),
            diffusion=lambda x: np.zeros(x.shape[:-1] + (2, 2)),
        )
        init = GaussianState(mean=np.array([1.0, -1.0]), cov=np.diag([0.09, 0.04]))
        mf = ensemble_forecast(model, init, n_ens=4000, lead_steps=5, rng_seed=0,
                               dt_sample=0.5)
        for lead in range(6):
            assert np.array_equal(mf.mean[lead], mf.mean[0])
            assert np.array_equal(mf.variance[lead], mf.variance[0])
        assert np.allclose(mf.mean[0], init.mean, atol=3 * 0.3 / np.sqrt(4000))

    def test_brownian_variance_within_three_se(self):
        model = SDEModel(
            dim=1,
            drift=lambda x: np.zeros_like(x),
            diffusion=lambda x: np.ones(x.shape[:-1] + (1, 1)),
        )
        n_ens = 4000
        init = GaussianState.isotropic(np.array([0.0]), 0.25)
        mf = ensemble_forecast(model, init, n_ens=n_ens, lead_steps=4, rng_seed=1,
                               dt_sample=0.5, substeps=5)
        for lead, t in enumerate(mf.lead_times):
            expected = 0.25 + t
            se = expected * np.sqrt(2.0 / (n_ens - 1))
            assert abs(mf.variance[lead, 0] - expected) < 3 * se

    def test_chunk_size_invariance(self):
        model = SDEModel(
            dim=1,
            drift=lambda x: -x,
            diffusion=lambda x: np.ones(x.shape[:-1] + (1, 1)),
        )
        init = GaussianState.isotropic(np.array([1.0]), 0.01)
        a = ensemble_forecast(model, init, 300, 3, rng_seed=5, dt_sample=0.2,
                              substeps=2, chunk_size=37)
        b = ensemble_forecast(model, init, 300, 3, rng_seed=5, dt_sample=0.2,
                              substeps=2, chunk_size=300)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.variance, b.variance)

    def test_monte_carlo_error_shrinks_with_members(self):
        model = SDEModel(
            dim=1,
            drift=lambda x: np.zeros_like(x),
            diffusion=lambda x: np.ones(x.shape[:-1] + (1, 1)),
        )
        init = GaussianState.isotropic(np.array([0.0]), 0.0)

        def spread_of_means(n_ens, base_seed):
            outs = [
                ensemble_forecast(model, init, n_ens, 1, rng_seed=base_seed + r,
                                  dt_sample=1.0).mean[1, 0]
                for r in range(24)
            ]
            return np.std(outs)

        ratio = spread_of_means(1000, 100) / spread_of_means(250, 400)
        assert ratio < 0.8  # quadrupling members roughly halves the error

    def test_observable_mapping(self):
        model = ODEModel(dim=3, rhs=lambda x: np.zeros_like(x))
        init = GaussianState.isotropic(np.array([1.0, 2.0, 3.0]), 0.01)
        mf = ensemble_forecast(model, init, 500, 2, rng_seed=2, dt_sample=0.1,
                               observable=lambda s: s[:, [2]])
        assert mf.mean.shape == (3, 1)
        assert mf.mean[0, 0] == pytest.approx(3.0, abs=0.02)

    def test_ode_model_integrates(self):
        init = GaussianState.isotropic(np.array([1.0, 1.0, 25.0]), 0.01)
        mf = ensemble_forecast(lorenz_model(), init, 200, 3, rng_seed=3,
                               dt_sample=0.1, substeps=10)
        assert np.all(np.isfinite(mf.mean))


def test_affine_model_validation():
    with pytest.raises(ValueError, match="finite"):
        AffineModel(linear=np.array([[np.inf]]), offset=np.zeros(1), fit_residual=0.0)
    with pytest.raises(ValueError, match="nonnegative"):
        AffineModel(linear=np.eye(1), offset=np.zeros(1), fit_residual=-1.0)
