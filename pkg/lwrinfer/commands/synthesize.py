import argparse
import logging
import os

import numpy as np
import pandas as pd

from lwrinfer.cores.constants import DETECTOR_CSV, GROUND_TRUTH_JSON, OBSERVATION_CSV
from lwrinfer.schemas.base import CommandResult
from lwrinfer.schemas.config import RunConfig
from lwrinfer.services.data import synthesize_twin, twin_detector_frame
from lwrinfer.services.prior import sample_prior_bc
from lwrinfer.commands.common import build_priors, resolve_burn_in, seed_generator
from lwrinfer.utils.exceptions import ConfigurationError
from lwrinfer.utils.io import ensure_dir, write_frame, write_model, write_observations

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("synthesize", help="Generate a synthetic-twin dataset at known parameters")
    parser.add_argument("--output", "-o", required=True, help="Output directory")
    parser.set_defaults(handler=run)


def true_boundaries(config: RunConfig, rng: np.random.Generator):
    prior_in, prior_out = build_priors(config)
    if config.twin.sample_bcs:
        return sample_prior_bc(prior_in, rng).density, sample_prior_bc(prior_out, rng).density
    return np.exp(prior_in.mu), np.exp(prior_out.mu)


def run(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    grid = config.grid
    twin = config.twin
    rng = seed_generator(config)
    bc_in, bc_out = true_boundaries(config, rng)
    if max(bc_in.max(), bc_out.max()) >= twin.truth.rho_j:
        raise ConfigurationError("True boundary densities reach the jam density; lower the mean-curve knots")

    n_minutes = twin.obs_minutes or int(np.floor(grid.t_final + 1e-9)) + 1
    obs_times = np.arange(n_minutes, dtype=float)
    if obs_times[-1] > grid.t_final + 1e-9:
        raise ConfigurationError(f"twin.obs_minutes={n_minutes} runs past t_final={grid.t_final}")
    obs, truth, densities = synthesize_twin(
        twin.truth, bc_in, bc_out, grid, twin.detector_positions, obs_times, rng,
        noise=twin.noise, burn_in=resolve_burn_in(config),
    )
    truth = truth.model_copy(update={"seed": config.sampler.seed})

    out = ensure_dir(args.output)
    write_observations(obs, os.path.join(out, OBSERVATION_CSV))
    write_frame(twin_detector_frame(obs, densities, np.array(truth.predicted_flow)), os.path.join(out, DETECTOR_CSV))
    write_model(truth, os.path.join(out, GROUND_TRUTH_JSON))
    for side, bc in (("bc_in", bc_in), ("bc_out", bc_out)):
        write_frame(pd.DataFrame({"time_min": grid.bc_times, "density": bc}), os.path.join(out, f"{side}.csv"))
    return CommandResult[dict](
        result=True,
        data={"n_detectors": obs.n_detectors, "n_times": obs.n_times, "burn_in": obs.burn_in, "output": out},
        message="Synthetic twin written",
    )
