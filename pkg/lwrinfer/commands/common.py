import logging
from typing import Tuple

import numpy as np

from lwrinfer.schemas.config import RunConfig
from lwrinfer.schemas.observation import ObservationSet
from lwrinfer.schemas.prior import FittedPriorExport, LogOuPrior, OuParams
from lwrinfer.services.data import clean_detector_frame, load_detector_csv, to_observation_set
from lwrinfer.services.model import TrafficPosterior, default_burn_in
from lwrinfer.services.prior import build_prior, import_prior, piecewise_linear_mu
from lwrinfer.utils.exceptions import ConfigurationError
from lwrinfer.utils.io import read_model, read_observations
from lwrinfer.utils.random import make_generator

logger = logging.getLogger(__name__)


def resolve_burn_in(config: RunConfig) -> int:
    if config.data.burn_in is not None:
        return config.data.burn_in
    return default_burn_in(config.grid.road_length, config.data.min_free_speed)


def build_priors(config: RunConfig) -> Tuple[LogOuPrior, LogOuPrior]:
    """Inlet and outlet priors on the inference BC grid, from fitted JSON or mean-curve knots."""
    grid = config.grid
    times = grid.bc_times
    M = config.sampler.truncation
    priors = []
    for path, knots in (
        (config.ou.prior_in_path, config.ou.mu_in_knots),
        (config.ou.prior_out_path, config.ou.mu_out_knots),
    ):
        if path:
            priors.append(import_prior(read_model(FittedPriorExport, path), times, M))
        else:
            ou = OuParams(beta=config.ou.beta, sigma=config.ou.sigma, dt=grid.bc_dt)
            priors.append(build_prior(piecewise_linear_mu(knots, times), ou, M))
    return priors[0], priors[1]


def load_observations(config: RunConfig, path: str = None) -> ObservationSet:
    burn_in = resolve_burn_in(config)
    path = path or config.data.observations_path
    if path:
        return read_observations(path, burn_in)
    if config.data.detectors_path:
        df = clean_detector_frame(load_detector_csv(config.data.detectors_path), config.data.fault_threshold)
        return to_observation_set(df, burn_in)
    raise ConfigurationError("No observations given: set data.observations_path or data.detectors_path")


def build_posterior(config: RunConfig, obs: ObservationSet) -> TrafficPosterior:
    prior_in, prior_out = build_priors(config)
    return TrafficPosterior(config.grid, obs, prior_in, prior_out, config.fd_prior, config.data.mode)


def seed_generator(config: RunConfig, offset: int = 0) -> np.random.Generator:
    seed = config.sampler.seed
    return make_generator(None if seed is None else seed + offset)
