import argparse
import logging
import os

import numpy as np
import pandas as pd

from lwrinfer.cores.constants import FD_PARAM_NAMES
from lwrinfer.schemas.base import CommandResult
from lwrinfer.schemas.config import RunConfig
from lwrinfer.services.data import clean_detector_frame, estimate_densities, load_detector_csv
from lwrinfer.services.diagnostics import credible_intervals
from lwrinfer.services.model import fit_direct
from lwrinfer.commands.common import seed_generator
from lwrinfer.utils.exceptions import ConfigurationError, DataError
from lwrinfer.utils.io import ensure_dir, write_frame

logger = logging.getLogger(__name__)

ESTIMATORS = {"speed": "density_speed", "occupancy": "density_occupancy"}


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit-direct", help="Fit del Castillo's FD directly to (density, flow) pairs")
    parser.add_argument("--detectors", help="Detector CSV, overrides data.detectors_path")
    parser.add_argument("--estimator", choices=sorted(ESTIMATORS), default="speed", help="Density estimator")
    parser.add_argument("--iterations", type=int, default=10000, help="RWM iterations per chain")
    parser.add_argument("--chains", type=int, default=3, help="Number of independent chains")
    parser.add_argument("--burn", type=float, default=0.2, help="Discarded leading fraction of each chain")
    parser.add_argument("--output", "-o", required=True, help="Output directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    path = args.detectors or config.data.detectors_path
    if not path:
        raise ConfigurationError("No detector file given: use --detectors or data.detectors_path")
    df = estimate_densities(clean_detector_frame(load_detector_csv(path), config.data.fault_threshold))
    column = ESTIMATORS[args.estimator]
    pairs = df[[column, "count"]].dropna()
    if pairs.empty:
        raise DataError(f"No usable (density, count) pairs in {path}")

    results = fit_direct(
        pairs[column].to_numpy(), pairs["count"].to_numpy(), seed_generator(config),
        n_iters=args.iterations, n_chains=args.chains, fd_box=config.fd_prior,
    )
    out = ensure_dir(args.output)
    start = int(args.burn * args.iterations)
    kept = []
    for n, res in enumerate(results):
        chain = pd.DataFrame(res.chain, columns=list(FD_PARAM_NAMES))
        chain.insert(0, "iteration", np.arange(len(chain)))
        chain["log_target"] = res.log_target
        write_frame(chain, os.path.join(out, f"direct_chain_{n}.csv"))
        kept.append(res.chain[start:])
    intervals = credible_intervals(np.vstack(kept))
    write_frame(intervals, os.path.join(out, "direct_intervals.csv"))
    rates = [r.acceptance_rate for r in results]
    return CommandResult[dict](
        result=True,
        data={"acceptance_rates": rates, "n_pairs": len(pairs), "intervals": intervals.to_dict(orient="records")},
        message=f"Direct fit written to {out}",
    )
