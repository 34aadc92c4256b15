"""Small builders shared by the unit tests."""

from functools import partial

import numpy as np
import pytest

from lwrinfer.schemas.config import SamplerSection
from lwrinfer.schemas.fd import DelCastilloParams, TriangularParams
from lwrinfer.schemas.grid import Grid
from lwrinfer.schemas.observation import ObservationSet
from lwrinfer.schemas.prior import OuParams
from lwrinfer.services.fd import DelCastilloFD, TriangularFD
from lwrinfer.services.model import TrafficPosterior, predict_flows
from lwrinfer.services.prior import build_prior, prior_projector, sample_prior_coordinates
from lwrinfer.services.samplers import Block, StateLayout

TRUTH = DelCastilloParams(z=200.0, rho_j=500.0, u=3.1, omega=0.2)


class ToyTarget:
    """Gaussian likelihood on a 2-d finite block, log-OU prior on two short Gaussian blocks"""

    def __init__(self, n_bc: int = 12, M: int = 2):
        self.prior = build_prior(np.zeros(n_bc), OuParams(beta=0.3, sigma=0.4, dt=1.0), M)
        self.n_bc = n_bc
        self.center = np.array([1.0, -1.0])

    def log_likelihood(self, state):
        head = state[:2]
        x_in = state[2:2 + self.n_bc]
        return float(-0.5 * np.sum((head - self.center) ** 2) / 0.25 - 0.5 * (x_in.mean() - 0.2) ** 2 / 0.05)

    def log_prior(self, state):
        if np.any(np.abs(state[:2]) > 10):
            return -np.inf
        x_in = state[2:2 + self.n_bc]
        x_out = state[2 + self.n_bc:]
        return self.prior.log_density(x_in) + self.prior.log_density(x_out)

    def layout(self) -> StateLayout:
        def gaussian(name):
            return Block(name, self.n_bc, projector=prior_projector(self.prior),
                         noise=partial(sample_prior_coordinates, self.prior))

        return StateLayout([Block("fd", 2), gaussian("inlet"), gaussian("outlet")])

    def initial_state(self, rng):
        return np.concatenate([
            rng.uniform(-2, 2, size=2),
            0.1 * sample_prior_coordinates(self.prior, rng),
            0.1 * sample_prior_coordinates(self.prior, rng),
        ])


@pytest.fixture
def tri_fd():
    return TriangularFD(TriangularParams(q_c=1.0, rho_c=0.15, rho_j=1.0))


@pytest.fixture
def dc_fd():
    return DelCastilloFD(DelCastilloParams(z=1.0, rho_j=1.0, u=3.1, omega=0.2))


@pytest.fixture
def toy_target():
    return ToyTarget()


@pytest.fixture
def toy_settings():
    return SamplerSection(
        n_walkers=6, truncation=2, n_iters=60, thin=5, snapshot_every=20, seed=7,
    )


def make_traffic_setup(burn_in: int = 1, mean_density: float = 30.0):
    """1 km road, 20 cells, 6 minutes, three detectors; counts are rounded predictions at TRUTH."""
    grid = Grid(road_length=1.0, n_cells=20, t_final=6.0, bc_dt=0.025)
    ou = OuParams(beta=0.22, sigma=0.256, dt=grid.bc_dt)
    mu = np.full(grid.n_bc, np.log(mean_density))
    prior = build_prior(mu, ou, 3)
    positions = [0.0, 0.5, 1.0]
    times = np.arange(7, dtype=float)
    skeleton = ObservationSet(
        detector_positions=positions, obs_times=times, counts=np.zeros((3, 7)), burn_in=burn_in,
    )
    bc = np.exp(mu)
    flows = predict_flows(DelCastilloFD(TRUTH), bc, bc, grid, skeleton)
    obs = ObservationSet(
        detector_positions=positions, obs_times=times, counts=np.round(flows), burn_in=burn_in,
    )
    posterior = TrafficPosterior(grid, obs, prior, prior)
    return grid, obs, posterior


@pytest.fixture
def traffic_setup():
    return make_traffic_setup()
