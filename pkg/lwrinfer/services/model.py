"""Forward map from parameters to detector flows, likelihoods and the tempered posterior."""

import logging
import math
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from lwrinfer.cores.config import FLOW_FLOOR
from lwrinfer.cores.constants import BLOCK_FD, BLOCK_INLET, BLOCK_OUTLET, FD_PARAM_NAMES
from lwrinfer.schemas.fd import DelCastilloParams, FdPriorBox
from lwrinfer.schemas.grid import Grid
from lwrinfer.schemas.observation import ObservationSet, Theta
from lwrinfer.schemas.prior import BoundaryCondition, LogOuPrior
from lwrinfer.schemas.sampler import RwmResult
from lwrinfer.services.fd import FundamentalDiagram, fd_from_vector, make_fd
from lwrinfer.services.prior import prior_projector, sample_prior_coordinates
from lwrinfer.services.samplers import Block, StateLayout, rwm
from lwrinfer.services.solver import solve
from lwrinfer.utils.exceptions import ConfigurationError, LwrInferError

logger = logging.getLogger(__name__)

MODE_INSTANTANEOUS = "instantaneous"
MODE_AVERAGED = "averaged"
# sub-samples per minute window in averaged mode
AVERAGING_POINTS = 5

# proposal covariance of (z, rho_j, u, omega) for the direct fit
DIRECT_FIT_COV = np.array(
    [
        [182.292318, -288.07905, -2.34389543, 1.21897887],
        [-288.07905, 561.808314, 5.26749447, -1.7470824],
        [-2.34389543, 5.26749447, 0.08204741, -0.00839764],
        [1.21897887, -1.7470824, -0.00839764, 0.00931977],
    ]
)


def default_burn_in(road_length: float, min_free_speed: float = 100.0) -> int:
    """Minutes for a vehicle at min_free_speed (km/h) to cross the road."""
    return int(math.ceil(road_length / (min_free_speed / 60.0) - 1e-9))


def detector_cells(positions: Sequence[float], grid: Grid) -> np.ndarray:
    """Cell whose center is nearest each detector; ties go to the lower index."""
    pos = np.asarray(positions, dtype=float)
    idx = np.ceil(pos / grid.dx - 1e-9).astype(int) - 1
    return np.clip(idx, 0, grid.n_cells - 1)


def initial_condition(bc_in_density: np.ndarray, grid: Grid) -> np.ndarray:
    """Constant road at the inlet's first boundary value."""
    return np.full(grid.n_cells, float(bc_in_density[0]))


def _solver_times(obs_times: np.ndarray, mode: str) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if mode == MODE_INSTANTANEOUS:
        return obs_times, None
    if mode != MODE_AVERAGED:
        raise ConfigurationError(f"Unknown observation mode '{mode}'")
    windows = [np.linspace(max(t - 1.0, 0.0), t, AVERAGING_POINTS) for t in obs_times]
    times = np.unique(np.round(np.concatenate(windows), 9))
    index = np.stack([np.searchsorted(times, np.round(w, 9)) for w in windows])
    return times, index


def detector_densities(
    fd: FundamentalDiagram,
    bc_in: np.ndarray,
    bc_out: np.ndarray,
    grid: Grid,
    positions: Sequence[float],
    times: np.ndarray,
) -> np.ndarray:
    """Solver density in each detector cell at each time, detector x time."""
    field = solve(initial_condition(bc_in, grid), bc_in, bc_out, fd, grid, output_times=times)
    return field.values[detector_cells(positions, grid), :]


def predict_flows(
    fd: FundamentalDiagram,
    bc_in: np.ndarray,
    bc_out: np.ndarray,
    grid: Grid,
    obs: ObservationSet,
    mode: str = MODE_INSTANTANEOUS,
) -> np.ndarray:
    """Predicted flow (veh/min) for every detector and observation time."""
    times, window_index = _solver_times(obs.obs_times, mode)
    densities = detector_densities(fd, bc_in, bc_out, grid, obs.detector_positions, times)
    flows = np.asarray(fd.flow(densities))
    if window_index is None:
        return flows
    return np.stack([flows[:, idx].mean(axis=1) for idx in window_index], axis=1)


def observation_operator(
    theta: Theta, grid: Grid, obs: ObservationSet, mode: str = MODE_INSTANTANEOUS, drop_burn_in: bool = True
) -> np.ndarray:
    """Run the solver at theta and pick out flows at the detectors."""
    flows = predict_flows(make_fd(theta.fd), theta.bc_in.density, theta.bc_out.density, grid, obs, mode)
    if drop_burn_in:
        return flows[:, obs.burn_in:]
    return flows


def poisson_loglik(counts: np.ndarray, predicted: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """sum(-q_hat + q log q_hat) over included entries; -inf if any q_hat <= 0."""
    counts = np.asarray(counts, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if mask is not None:
        counts = counts[mask]
        predicted = predicted[mask]
    if counts.size == 0:
        return 0.0
    if np.any(~(predicted > 0)):
        return -np.inf
    return float(np.sum(-predicted + counts * np.log(predicted)))


def direct_fit_loglik(fd_params, densities: np.ndarray, counts: np.ndarray) -> float:
    """Poisson log-likelihood of (density, count) pairs under del Castillo's FD."""
    densities = np.asarray(densities, dtype=float)
    if densities.size == 0:
        return 0.0
    if not isinstance(fd_params, DelCastilloParams):
        try:
            fd = fd_from_vector(fd_params)
        except ValidationError:
            return -np.inf
    else:
        fd = make_fd(fd_params)
    predicted = np.maximum(np.asarray(fd.flow(np.clip(densities, 0.0, fd.rho_j))), FLOW_FLOOR)
    return poisson_loglik(counts, predicted)


class TrafficPosterior:
    """Tempered posterior over the flat state fd(4) ++ x_in ++ x_out"""

    def __init__(
        self,
        grid: Grid,
        obs: ObservationSet,
        prior_in: LogOuPrior,
        prior_out: LogOuPrior,
        fd_box: Optional[FdPriorBox] = None,
        mode: str = MODE_INSTANTANEOUS,
    ):
        if prior_in.n != grid.n_bc or prior_out.n != grid.n_bc:
            raise ConfigurationError(
                f"Boundary priors have {prior_in.n}/{prior_out.n} points, grid needs {grid.n_bc}"
            )
        try:
            obs.check_geometry(grid.road_length, grid.t_final)
        except ValueError as e:
            raise ConfigurationError(str(e))
        self.grid = grid
        self.obs = obs
        self.prior_in = prior_in
        self.prior_out = prior_out
        self.fd_box = fd_box or FdPriorBox()
        self.mode = mode
        self.mask = obs.likelihood_mask()

    @property
    def n_bc(self) -> int:
        return self.grid.n_bc

    @property
    def dim(self) -> int:
        return len(FD_PARAM_NAMES) + 2 * self.n_bc

    def split(self, state: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = len(FD_PARAM_NAMES)
        return state[:n], state[n:n + self.n_bc], state[n + self.n_bc:]

    def join(self, fd_vector: Sequence[float], x_in: np.ndarray, x_out: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(fd_vector, dtype=float), x_in, x_out])

    def predicted(self, state: np.ndarray) -> np.ndarray:
        fd_vector, x_in, x_out = self.split(np.asarray(state, dtype=float))
        fd = fd_from_vector(fd_vector)
        return predict_flows(
            fd, self.prior_in.to_density(x_in), self.prior_out.to_density(x_out), self.grid, self.obs, self.mode
        )

    def log_likelihood(self, state: np.ndarray) -> float:
        fd_vector, x_in, x_out = self.split(np.asarray(state, dtype=float))
        try:
            fd = fd_from_vector(fd_vector)
        except ValidationError:
            return -np.inf
        bc_in = self.prior_in.to_density(x_in)
        bc_out = self.prior_out.to_density(x_out)
        if np.any(bc_in >= fd.rho_j) or np.any(bc_out >= fd.rho_j):
            return -np.inf
        try:
            flows = predict_flows(fd, bc_in, bc_out, self.grid, self.obs, self.mode)
        except LwrInferError as e:
            logger.debug(f"Forward solve failed, rejecting: {e.detail}")
            return -np.inf
        return poisson_loglik(self.obs.counts, np.maximum(flows, FLOW_FLOOR), self.mask)

    def log_prior(self, state: np.ndarray) -> float:
        fd_vector, x_in, x_out = self.split(np.asarray(state, dtype=float))
        lp = self.fd_box.log_density(fd_vector)
        if lp == -np.inf:
            return lp
        return lp + self.prior_in.log_density(x_in) + self.prior_out.log_density(x_out)

    def log_posterior(self, state: np.ndarray, beta: float = 1.0) -> float:
        if not 0 < beta <= 1:
            raise ConfigurationError(f"Inverse temperature must lie in (0, 1], got {beta}")
        lp = self.log_prior(state)
        if lp == -np.inf:
            return lp
        return beta * self.log_likelihood(state) + lp

    def build_layout(self) -> StateLayout:
        return StateLayout(
            [
                Block(BLOCK_FD, len(FD_PARAM_NAMES)),
                Block(
                    BLOCK_INLET,
                    self.n_bc,
                    projector=prior_projector(self.prior_in),
                    noise=partial(sample_prior_coordinates, self.prior_in),
                ),
                Block(
                    BLOCK_OUTLET,
                    self.n_bc,
                    projector=prior_projector(self.prior_out),
                    noise=partial(sample_prior_coordinates, self.prior_out),
                ),
            ]
        )

    def initial_state(self, rng: np.random.Generator, bc_scale: float = 0.1) -> np.ndarray:
        """FD drawn from the box, BC coordinates as shrunken prior draws."""
        return self.join(
            self.fd_box.sample(rng),
            bc_scale * sample_prior_coordinates(self.prior_in, rng),
            bc_scale * sample_prior_coordinates(self.prior_out, rng),
        )

    def to_theta(self, state: np.ndarray) -> Theta:
        fd_vector, x_in, x_out = self.split(np.asarray(state, dtype=float))
        z, rho_j, u, omega = (float(v) for v in fd_vector)
        return Theta.model_validate(
            {
                "fd": DelCastilloParams(z=z, rho_j=rho_j, u=u, omega=omega),
                "bc_in": BoundaryCondition.from_coordinates(x_in, self.prior_in),
                "bc_out": BoundaryCondition.from_coordinates(x_out, self.prior_out),
            },
            context={"fd_box": self.fd_box},
        )

    def from_theta(self, theta: Theta) -> np.ndarray:
        return self.join(theta.fd.as_vector(), theta.bc_in.x, theta.bc_out.x)


def fit_direct(
    densities: np.ndarray,
    counts: np.ndarray,
    rng: np.random.Generator,
    n_iters: int = 10000,
    n_chains: int = 3,
    fd_box: Optional[FdPriorBox] = None,
    proposal_cov: Optional[np.ndarray] = None,
    init: Optional[np.ndarray] = None,
) -> List[RwmResult]:
    """Fit del Castillo's FD straight to (density, count) pairs with random-walk Metropolis."""
    box = fd_box or FdPriorBox()
    cov = DIRECT_FIT_COV if proposal_cov is None else proposal_cov
    densities = np.asarray(densities, dtype=float)
    counts = np.asarray(counts, dtype=float)

    def logpost(vector: np.ndarray) -> float:
        if not box.contains(vector):
            return -np.inf
        return direct_fit_loglik(vector, densities, counts)

    results = []
    for chain in range(n_chains):
        start = box.sample(rng) if init is None else np.asarray(init, dtype=float)
        result = rwm(logpost, start, cov, n_iters, rng)
        logger.info(f"Direct fit chain {chain}: acceptance {result.acceptance_rate:.3f}")
        results.append(result)
    return results
