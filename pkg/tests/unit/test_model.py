"""Tests for the observation operator, likelihoods and the tempered traffic posterior."""

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import TRUTH, make_traffic_setup
from lwrinfer.schemas.fd import DelCastilloParams, FdPriorBox, TriangularParams
from lwrinfer.schemas.grid import Grid
from lwrinfer.schemas.observation import ObservationSet, Theta
from lwrinfer.schemas.prior import BoundaryCondition
from lwrinfer.services.data import synthesize_twin
from lwrinfer.services.fd import DelCastilloFD
from lwrinfer.services.model import (
    MODE_AVERAGED,
    TrafficPosterior,
    default_burn_in,
    detector_cells,
    detector_densities,
    direct_fit_loglik,
    fit_direct,
    observation_operator,
    poisson_loglik,
    predict_flows,
)
from lwrinfer.utils.exceptions import ConfigurationError


def _truth_state(posterior):
    return posterior.join(TRUTH.as_vector(), np.zeros(posterior.n_bc), np.zeros(posterior.n_bc))


class TestPoissonLoglik:
    def test_zero_counts(self):
        predicted = np.array([[1.5, 2.0], [0.5, 3.0]])
        assert poisson_loglik(np.zeros((2, 2)), predicted) == pytest.approx(-7.0)

    def test_reference_value(self):
        assert poisson_loglik(np.array([90]), np.array([100.0])) == pytest.approx(314.465, abs=1e-3)

    def test_maximized_at_observed_count(self):
        at = poisson_loglik(np.array([12]), np.array([12.0]))
        assert at > poisson_loglik(np.array([12]), np.array([11.9]))
        assert at > poisson_loglik(np.array([12]), np.array([12.1]))

    def test_non_positive_prediction(self):
        assert poisson_loglik(np.array([3, 4]), np.array([1.0, 0.0])) == -np.inf

    def test_mask_excludes_entries(self):
        mask = np.array([True, False])
        assert poisson_loglik(np.array([3, 4]), np.array([2.0, 0.0]), mask) == pytest.approx(-2.0 + 3 * np.log(2.0))


class TestDirectFit:
    def test_empty_data(self):
        assert direct_fit_loglik(TRUTH, np.array([]), np.array([])) == 0.0

    def test_jam_density_hits_flow_floor(self):
        value = direct_fit_loglik(TRUTH, np.array([500.0]), np.array([5]))
        assert value == pytest.approx(-1e-3 + 5 * np.log(1e-3))

    def test_invalid_vector(self):
        assert direct_fit_loglik(np.array([-1.0, 500.0, 3.1, 0.2]), np.array([50.0]), np.array([5])) == -np.inf

    def test_true_parameters_win(self):
        rng = np.random.default_rng(0)
        fd = DelCastilloFD(TRUTH)
        true_vec = np.array(TRUTH.as_vector())
        wins = 0
        for _ in range(100):
            rho = rng.uniform(5.0, 300.0, 150)
            counts = rng.poisson(fd.flow(rho))
            wins += direct_fit_loglik(true_vec, rho, counts) > direct_fit_loglik(1.1 * true_vec, rho, counts)
        assert wins >= 95

    def test_fit_direct_chains_stay_in_box(self):
        rng = np.random.default_rng(1)
        rho = rng.uniform(5.0, 300.0, 100)
        counts = rng.poisson(DelCastilloFD(TRUTH).flow(rho))
        results = fit_direct(rho, counts, rng, n_iters=300, n_chains=2, init=TRUTH.as_vector())
        assert len(results) == 2
        for res in results:
            assert res.chain.shape == (300, 4)
            assert 0.0 <= res.acceptance_rate <= 1.0
            assert np.all(np.isfinite(res.log_target))


class TestGeometry:
    def test_detector_cells(self):
        grid = Grid(road_length=1.0, n_cells=10, t_final=1.0, bc_dt=0.025)
        np.testing.assert_array_equal(detector_cells([0.0, 0.1, 0.15, 0.55, 1.0], grid), [0, 0, 1, 5, 9])

    def test_default_burn_in(self):
        assert default_burn_in(5.0) == 3
        assert default_burn_in(2.0) == 2
        assert default_burn_in(5.0, min_free_speed=50.0) == 6


class TestObservationOperator:
    def test_constant_solution(self, traffic_setup):
        grid, obs, posterior = traffic_setup
        zeros = np.zeros(grid.n_bc)
        theta = Theta(
            fd=TRUTH,
            bc_in=BoundaryCondition.from_coordinates(zeros, posterior.prior_in),
            bc_out=BoundaryCondition.from_coordinates(zeros, posterior.prior_out),
        )
        flows = observation_operator(theta, grid, obs)
        assert flows.shape == (3, 7 - obs.burn_in)
        np.testing.assert_allclose(flows, DelCastilloFD(TRUTH).flow(30.0), rtol=1e-12)

    def test_averaged_mode_on_constant_solution(self, traffic_setup):
        grid, obs, _ = traffic_setup
        bc = np.full(grid.n_bc, 30.0)
        flows = predict_flows(DelCastilloFD(TRUTH), bc, bc, grid, obs, MODE_AVERAGED)
        assert flows.shape == (3, 7)
        np.testing.assert_allclose(flows, DelCastilloFD(TRUTH).flow(30.0), rtol=1e-12)

    def test_unknown_mode(self, traffic_setup):
        grid, obs, _ = traffic_setup
        bc = np.full(grid.n_bc, 30.0)
        with pytest.raises(ConfigurationError):
            predict_flows(DelCastilloFD(TRUTH), bc, bc, grid, obs, "hourly")

    def test_free_flow_pulse_arrival(self):
        grid = Grid(road_length=3.0, n_cells=120, t_final=3.0, bc_dt=0.025)
        fd = DelCastilloFD(TRUTH)
        t = grid.bc_times
        bc_in = np.where((t >= 0.5) & (t < 1.0), 60.0, 20.0)
        bc_out = np.full(grid.n_bc, 20.0)
        times = np.round(np.arange(0.0, 3.0 + 1e-9, 0.02), 10)
        rho = detector_densities(fd, bc_in, bc_out, grid, [1.5], times)[0]
        arrival = times[np.argmax(rho >= 40.0)]
        x = grid.cell_centers[detector_cells([1.5], grid)[0]]
        assert arrival == pytest.approx(0.5 + x / fd.wave_speed(40.0), abs=0.1)

    def test_twin_closed_loop(self, traffic_setup):
        grid, obs, posterior = traffic_setup
        bc = posterior.prior_in.to_density(np.zeros(grid.n_bc))
        twin, truth, _ = synthesize_twin(
            TRUTH, bc, bc, grid, obs.detector_positions, obs.obs_times, np.random.default_rng(0),
            noise="rounded", burn_in=1,
        )
        np.testing.assert_array_equal(posterior.predicted(_truth_state(posterior)), np.array(truth.predicted_flow))
        np.testing.assert_array_equal(twin.counts, obs.counts)


class TestTrafficPosterior:
    def test_dimensions_and_split(self, traffic_setup):
        grid, _, posterior = traffic_setup
        state = _truth_state(posterior)
        assert posterior.dim == 4 + 2 * grid.n_bc == state.size
        fd_vector, x_in, x_out = posterior.split(state)
        assert fd_vector.tolist() == list(TRUTH.as_vector())
        assert x_in.size == x_out.size == grid.n_bc

    def test_theta_round_trip(self, traffic_setup):
        _, _, posterior = traffic_setup
        state = _truth_state(posterior)
        np.testing.assert_allclose(posterior.from_theta(posterior.to_theta(state)), state)

    def test_outside_box(self, traffic_setup):
        _, _, posterior = traffic_setup
        state = _truth_state(posterior)
        state[0] = 450.0
        assert posterior.log_posterior(state) == -np.inf

    def test_boundary_above_jam_density(self, traffic_setup):
        grid, _, posterior = traffic_setup
        state = _truth_state(posterior)
        state[4:4 + grid.n_bc] = np.log(600.0 / 30.0)
        assert posterior.log_likelihood(state) == -np.inf

    def test_temperature_scales_likelihood_only(self, traffic_setup):
        _, _, posterior = traffic_setup
        a = _truth_state(posterior)
        b = a.copy()
        b[0] = 230.0
        d_ll = posterior.log_likelihood(a) - posterior.log_likelihood(b)
        d_prior = posterior.log_prior(a) - posterior.log_prior(b)
        for beta in (0.3, 0.6, 1.0):
            ratio = posterior.log_posterior(a, beta) - posterior.log_posterior(b, beta)
            assert ratio == pytest.approx(beta * d_ll + d_prior, rel=1e-10)
        assert posterior.log_posterior(a) == posterior.log_posterior(a, 1.0)

    def test_rejects_bad_temperature(self, traffic_setup):
        _, _, posterior = traffic_setup
        with pytest.raises(ConfigurationError):
            posterior.log_posterior(_truth_state(posterior), 0.0)

    def test_burn_in_columns_do_not_matter(self, traffic_setup):
        grid, obs, posterior = traffic_setup
        counts = np.array(obs.counts)
        counts[:, 0] += 25
        perturbed = ObservationSet(
            detector_positions=obs.detector_positions, obs_times=obs.obs_times, counts=counts, burn_in=obs.burn_in,
        )
        other = TrafficPosterior(grid, perturbed, posterior.prior_in, posterior.prior_out)
        state = _truth_state(posterior)
        assert other.log_posterior(state) == posterior.log_posterior(state)

    def test_deterministic(self, traffic_setup):
        _, _, posterior = traffic_setup
        state = _truth_state(posterior)
        np.testing.assert_array_equal(posterior.predicted(state), posterior.predicted(state))

    def test_truth_beats_shifted_boundaries(self):
        _, _, posterior = make_traffic_setup(burn_in=2)
        truth = _truth_state(posterior)
        shifted = truth.copy()
        shifted[4:] += 0.5
        assert posterior.log_likelihood(truth) > posterior.log_likelihood(shifted)

    def test_initial_state_is_finite(self, traffic_setup):
        _, _, posterior = traffic_setup
        state = posterior.initial_state(np.random.default_rng(2))
        assert posterior.fd_box.contains(posterior.split(state)[0])
        assert np.isfinite(posterior.log_prior(state))

    def test_priors_must_match_grid(self, traffic_setup):
        _, obs, posterior = traffic_setup
        with pytest.raises(ConfigurationError):
            TrafficPosterior(Grid(road_length=1.0, n_cells=20, t_final=5.0, bc_dt=0.025), obs,
                             posterior.prior_in, posterior.prior_out)


class TestTheta:
    @staticmethod
    def _bcs(posterior, level=0.0):
        x = np.full(posterior.n_bc, level)
        return (BoundaryCondition.from_coordinates(x, posterior.prior_in),
                BoundaryCondition.from_coordinates(x, posterior.prior_out))

    def test_valid(self, traffic_setup):
        _, _, posterior = traffic_setup
        bc_in, bc_out = self._bcs(posterior)
        assert Theta(fd=TRUTH, bc_in=bc_in, bc_out=bc_out).fd == TRUTH

    def test_fd_outside_prior_box(self, traffic_setup):
        _, _, posterior = traffic_setup
        bc_in, bc_out = self._bcs(posterior)
        fd = DelCastilloParams(z=450.0, rho_j=500.0, u=3.1, omega=0.2)
        with pytest.raises(ValidationError, match="outside the prior box"):
            Theta(fd=fd, bc_in=bc_in, bc_out=bc_out)

    def test_density_at_jam(self, traffic_setup):
        _, _, posterior = traffic_setup
        # exp(log 30 + 3) is above rho_j = 500
        bc_in, bc_out = self._bcs(posterior, level=3.0)
        with pytest.raises(ValidationError, match="below rho_j"):
            Theta(fd=TRUTH, bc_in=bc_in, bc_out=bc_out)

    def test_triangular_checks_jam_density_only(self, traffic_setup):
        _, _, posterior = traffic_setup
        bc_in, bc_out = self._bcs(posterior)
        tri = TriangularParams(q_c=60.0, rho_c=20.0, rho_j=25.0)
        with pytest.raises(ValidationError, match="below rho_j"):
            Theta(fd=tri, bc_in=bc_in, bc_out=bc_out)
        assert Theta(fd=tri.model_copy(update={"rho_j": 100.0}), bc_in=bc_in, bc_out=bc_out).fd.rho_j == 100.0

    def test_posterior_box_used_as_context(self):
        grid, obs, posterior = make_traffic_setup()
        wide = TrafficPosterior(grid, obs, posterior.prior_in, posterior.prior_out, FdPriorBox(z=(100.0, 1000.0)))
        state = _truth_state(wide)
        state[0] = 600.0
        assert wide.to_theta(state).fd.z == 600.0
