"""Tests for the log-OU prior: covariance, AR(1) sampling, KL modes and fitting."""

import numpy as np
import pytest
from scipy import ndimage, stats

from lwrinfer.schemas.prior import OuParams
from lwrinfer.services.prior import (
    SIGMA_FLOOR,
    ar1_filter,
    build_prior,
    export_prior,
    fit_log_mean,
    fit_ou,
    import_prior,
    interpolate_mu,
    kl_decompose,
    ou_covariance,
    ou_log_likelihood,
    ou_precision,
    piecewise_linear_mu,
    sample_prior_bc,
)
from lwrinfer.utils.exceptions import ConfigurationError, DataError

OU = OuParams(beta=0.22, sigma=0.256, dt=1.0)


class TestOuCovariance:
    def test_stationary_variance(self):
        C = ou_covariance(OU, 10)
        np.testing.assert_allclose(np.diag(C), 0.1489, atol=1e-4)

    def test_lag_one_correlation(self):
        C = ou_covariance(OU, 10)
        assert C[0, 1] / C[0, 0] == pytest.approx(0.8025, abs=1e-4)
        assert OU.lag_one_correlation == pytest.approx(np.exp(-0.22))

    def test_strong_mean_reversion_is_diagonal(self):
        C = ou_covariance(OuParams(beta=60.0, sigma=1.0, dt=1.0), 5)
        np.testing.assert_allclose(C - np.diag(np.diag(C)), 0.0, atol=1e-20)

    def test_precision_inverts_covariance(self):
        n = 25
        np.testing.assert_allclose(ou_precision(OU, n) @ ou_covariance(OU, n), np.eye(n), atol=1e-10)

    def test_log_density_matches_dense_gaussian(self):
        n = 15
        x = np.random.default_rng(0).normal(size=(3, n))
        expected = stats.multivariate_normal(mean=np.zeros(n), cov=ou_covariance(OU, n)).logpdf(x)
        np.testing.assert_allclose(OU.log_density(x), expected, rtol=1e-10)

    def test_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            ou_covariance(OU, 1)


class TestSampling:
    def test_zero_noise_gives_mean_curve(self):
        prior = build_prior(np.log(np.full(20, 40.0)), OU, 3)
        x = ar1_filter(np.zeros(20), OU)
        np.testing.assert_array_equal(x, 0.0)
        np.testing.assert_allclose(prior.to_density(x), 40.0)

    def test_draws_are_positive(self):
        prior = build_prior(np.log(np.full(30, 40.0)), OU, 3)
        bc = sample_prior_bc(prior, np.random.default_rng(1))
        assert np.all(bc.density > 0)
        np.testing.assert_allclose(prior.to_coordinates(bc.density), bc.x, atol=1e-12)

    def test_marginal_variance_and_lag_one_correlation(self):
        paths = ar1_filter(np.random.default_rng(2).standard_normal((10000, 50)), OU)
        assert np.var(paths) == pytest.approx(OU.stationary_variance, rel=0.05)
        lag1 = np.sum(paths[:, 1:] * paths[:, :-1]) / np.sum(paths[:, :-1] ** 2)
        assert lag1 == pytest.approx(np.exp(-0.22), rel=0.02)

    def test_fine_grid_matches_coarse_grid_at_whole_minutes(self):
        fine = OuParams(beta=0.22, sigma=0.256, dt=0.025)
        paths = ar1_filter(np.random.default_rng(3).standard_normal((2000, 401)), fine)[:, ::40]
        coarse = ar1_filter(np.random.default_rng(4).standard_normal((2000, 11)), OU)
        assert stats.ks_2samp(paths[:, 5], coarse[:, 5]).pvalue > 0.01
        assert np.corrcoef(paths[:, 4], paths[:, 5])[0, 1] == pytest.approx(np.exp(-0.22), abs=0.05)


class TestKl:
    def test_full_reconstruction(self):
        C = ou_covariance(OU, 30)
        J, vals = kl_decompose(C, 30)
        np.testing.assert_allclose(J @ np.diag(vals) @ J.T, C, atol=1e-8)

    def test_orthonormal_descending_positive(self):
        J, vals = kl_decompose(ou_covariance(OU, 40), 5)
        np.testing.assert_allclose(J.T @ J, np.eye(5), atol=1e-10)
        assert np.all(vals > 0)
        assert np.all(np.diff(vals) <= 0)

    def test_sign_convention_and_low_frequency_lead(self):
        J, _ = kl_decompose(ou_covariance(OU, 40), 3)
        for k in range(3):
            first = J[np.flatnonzero(np.abs(J[:, k]) > 1e-12)[0], k]
            assert first > 0
        assert np.all(J[:, 0] > 0)

    @pytest.mark.parametrize("M", [0, 41])
    def test_truncation_out_of_range(self, M):
        with pytest.raises(ConfigurationError):
            kl_decompose(ou_covariance(OU, 40), M)

    def test_coordinates_have_eigenvalue_covariance(self):
        prior = build_prior(np.zeros(40), OU, 4)
        paths = ar1_filter(np.random.default_rng(5).standard_normal((10000, 40)), OU)
        coords = paths @ prior.cov_eigvecs
        cov = np.cov(coords, rowvar=False)
        np.testing.assert_allclose(np.diag(cov), prior.cov_eigvals, rtol=0.1)
        off = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off)) < 0.1 * prior.cov_eigvals[0]

    def test_kl_coordinates_and_reconstruct(self):
        prior = build_prior(np.zeros(20), OU, 20)
        x = np.random.default_rng(6).normal(size=20)
        np.testing.assert_allclose(prior.reconstruct(prior.kl_coordinates(x)), x, atol=1e-10)


class TestMeanCurve:
    def test_constant_curves(self):
        curves = np.full((4, 60), 37.5)
        np.testing.assert_allclose(fit_log_mean(curves), np.log(37.5), atol=1e-12)

    def test_identical_curves(self):
        curve = 30.0 + 10.0 * np.sin(np.linspace(0, 3, 50)) ** 2
        expected = ndimage.uniform_filter1d(np.log(curve), size=5, mode="nearest")
        np.testing.assert_allclose(fit_log_mean(np.vstack([curve, curve])), expected, rtol=1e-12)

    def test_noisy_constant_curves(self):
        rng = np.random.default_rng(7)
        curves = 40.0 * np.exp(rng.normal(0.0, 0.1, size=(200, 60)))
        mu = fit_log_mean(curves)
        se = 0.1 / np.sqrt(200)
        assert np.all(np.abs(mu - np.log(40.0)) < 3 * se)

    def test_non_positive_values(self):
        with pytest.raises(DataError):
            fit_log_mean(np.array([[10.0, 0.0, 12.0]]))

    def test_piecewise_linear_knots(self):
        mu = piecewise_linear_mu([(10.0, 50.0), (0.0, 30.0)], np.array([0.0, 5.0, 10.0, 20.0]))
        np.testing.assert_allclose(np.exp(mu), [30.0, 40.0, 50.0, 50.0])

    def test_interpolate_mu(self):
        mu = np.log(np.array([30.0, 40.0, 50.0]))
        fine = interpolate_mu(mu, 1.0, np.arange(0.0, 2.0 + 1e-9, 0.25))
        assert fine.size == 9
        assert fine[4] == pytest.approx(mu[1])
        with pytest.raises(ConfigurationError):
            interpolate_mu(mu, 1.0, np.array([0.0, 3.0]))


class TestOuFit:
    def test_rejects_non_positive_parameters(self):
        centred = np.zeros((1, 10))
        assert ou_log_likelihood(np.array([-0.1, 0.2]), centred) == -np.inf
        assert ou_log_likelihood(np.array([0.2, SIGMA_FLOOR / 2]), centred) == -np.inf

    def test_single_constant_curve_does_not_crash(self):
        curve = np.log(np.full((1, 60), 35.0))
        chain, summary = fit_ou(curve, np.log(35.0) * np.ones(60), np.random.default_rng(8), n_iters=500)
        assert np.all(np.isfinite(chain))
        assert chain[:, 1].min() >= SIGMA_FLOOR
        assert summary.n_curves == 1

    def test_per_row_means(self):
        rng = np.random.default_rng(9)
        x = ar1_filter(rng.standard_normal((6, 100)), OU)
        mu = np.vstack([np.full((3, 100), 3.0), np.full((3, 100), 4.0)])
        chain, summary = fit_ou(x + mu, mu, rng, n_iters=400)
        assert chain.shape == (320, 2)
        assert summary.curve_length == 100

    @pytest.mark.slow
    def test_recovers_generating_parameters(self):
        rng = np.random.default_rng(10)
        curves = ar1_filter(rng.standard_normal((50, 480)), OU)
        _, summary = fit_ou(curves, np.zeros(480), rng, n_iters=3000)
        assert summary.beta_mean == pytest.approx(0.22, rel=0.1)
        assert summary.sigma_mean == pytest.approx(0.256, rel=0.1)

    @pytest.mark.slow
    def test_doubling_sigma_doubles_estimate(self):
        rng = np.random.default_rng(11)
        noise = rng.standard_normal((50, 480))
        doubled = OuParams(beta=0.22, sigma=0.512, dt=1.0)
        _, base = fit_ou(ar1_filter(noise, OU), np.zeros(480), rng, n_iters=3000)
        _, twice = fit_ou(ar1_filter(noise, doubled), np.zeros(480), rng, n_iters=3000)
        assert twice.sigma_mean / base.sigma_mean == pytest.approx(2.0, rel=0.1)


class TestExport:
    def test_round_trip_on_same_grid(self):
        times = np.arange(0.0, 10.0 + 1e-9, 1.0)
        prior = build_prior(piecewise_linear_mu([(0.0, 30.0), (10.0, 45.0)], times), OU, 3)
        again = import_prior(export_prior(prior), times)
        np.testing.assert_allclose(again.mu, prior.mu)
        np.testing.assert_allclose(again.cov_eigvals, prior.cov_eigvals)
        assert again.truncation == 3

    def test_refines_onto_inference_grid(self):
        times = np.arange(0.0, 10.0 + 1e-9, 1.0)
        prior = build_prior(np.log(np.full(11, 30.0)), OU, 3)
        fine = import_prior(export_prior(prior), np.arange(0.0, 10.0 + 1e-9, 0.025), M=4)
        assert fine.n == 401
        assert fine.ou.dt == pytest.approx(0.025)
        assert fine.truncation == 4
