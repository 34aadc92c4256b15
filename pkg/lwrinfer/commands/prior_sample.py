import argparse
import logging
import os

import numpy as np
import pandas as pd

from lwrinfer.cores.constants import PRIOR_JSON
from lwrinfer.schemas.base import CommandResult
from lwrinfer.schemas.config import RunConfig
from lwrinfer.services.prior import export_prior, sample_prior_bc
from lwrinfer.commands.common import build_priors, seed_generator
from lwrinfer.utils.io import ensure_dir, write_frame, write_model

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("prior-sample", help="Draw boundary conditions from the log-OU prior")
    parser.add_argument("--n", type=int, default=10, help="Number of draws per boundary")
    parser.add_argument("--every", type=int, default=1, help="Keep every n-th BC sample in the output")
    parser.add_argument("--output", "-o", required=True, help="Output directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    rng = seed_generator(config)
    out = ensure_dir(args.output)
    times = config.grid.bc_times[:: args.every]
    files = {}
    for side, prior in zip(("inlet", "outlet"), build_priors(config)):
        draws = {f"draw_{n}": sample_prior_bc(prior, rng).density[:: args.every] for n in range(args.n)}
        df = pd.DataFrame({"time_min": times, "exp_mu": np.exp(prior.mu)[:: args.every], **draws})
        path = os.path.join(out, f"prior_{side}.csv")
        write_frame(df, path)
        write_model(export_prior(prior), os.path.join(out, f"{side}_{PRIOR_JSON}"))
        files[side] = path
    logger.info(f"Wrote {args.n} prior draws per boundary to {out}")
    return CommandResult[dict](result=True, data={"files": files, "n_draws": args.n}, message="Prior draws written")
