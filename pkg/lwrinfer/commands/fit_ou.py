import argparse
import logging
import os

import numpy as np
import pandas as pd

from lwrinfer.cores.constants import PRIOR_JSON
from lwrinfer.schemas.base import CommandResult
from lwrinfer.schemas.config import RunConfig
from lwrinfer.schemas.prior import OuParams
from lwrinfer.services.data import load_curves_csv
from lwrinfer.services.prior import build_prior, export_prior, fit_log_mean, fit_ou
from lwrinfer.commands.common import seed_generator
from lwrinfer.utils.exceptions import ConfigurationError
from lwrinfer.utils.io import ensure_dir, write_frame, write_model

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit-ou", help="Fit the log-OU prior to historical density curves")
    parser.add_argument("--curves-in", help="Inlet curves CSV, overrides data.curves_in_path")
    parser.add_argument("--curves-out", help="Outlet curves CSV, overrides data.curves_out_path")
    parser.add_argument("--iterations", type=int, help="RWM iterations, overrides ou.fit_iterations")
    parser.add_argument("--output", "-o", required=True, help="Output directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    paths = {
        "inlet": args.curves_in or config.data.curves_in_path,
        "outlet": args.curves_out or config.data.curves_out_path,
    }
    paths = {side: p for side, p in paths.items() if p}
    if not paths:
        raise ConfigurationError("No historical curves given: use --curves-in/--curves-out or data.curves_*_path")

    curves = {side: load_curves_csv(p) for side, p in paths.items()}
    lengths = {c.shape[1] for c in curves.values()}
    if len(lengths) > 1:
        raise ConfigurationError(f"Inlet and outlet curves must share one minute grid, got lengths {sorted(lengths)}")
    mus = {side: fit_log_mean(c, config.ou.smoothing_window) for side, c in curves.items()}

    # inlet and outlet curves share (beta, sigma), each centred by its own mean
    log_curves = np.vstack([np.log(curves[s]) for s in curves])
    row_mu = np.vstack([np.tile(mus[s], (curves[s].shape[0], 1)) for s in curves])
    chain, summary = fit_ou(log_curves, row_mu, seed_generator(config), n_iters=args.iterations or config.ou.fit_iterations)

    out = ensure_dir(args.output)
    ou = OuParams(beta=summary.beta_mean, sigma=summary.sigma_mean, dt=1.0)
    files = {}
    for side, mu in mus.items():
        M = min(config.sampler.truncation, mu.size)
        path = os.path.join(out, f"{side}_{PRIOR_JSON}")
        write_model(export_prior(build_prior(mu, ou, M)), path)
        files[side] = path
    write_frame(pd.DataFrame(chain, columns=["beta", "sigma"]), os.path.join(out, "ou_chain.csv"))
    logger.info(f"Fitted OU prior written to {out}")
    return CommandResult[dict](
        result=True, data={"summary": summary.model_dump(), "files": files}, message="OU prior fitted"
    )
