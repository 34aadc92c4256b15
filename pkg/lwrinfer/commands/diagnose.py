import argparse
import logging
import os

import pandas as pd

from lwrinfer.cores.constants import OBSERVATION_CSV, RECORD_NPZ, RESOLVED_CONFIG_YAML
from lwrinfer.schemas.base import CommandResult
from lwrinfer.schemas.config import RunConfig
from lwrinfer.services import diagnostics
from lwrinfer.commands.common import build_posterior, seed_generator
from lwrinfer.utils.exceptions import ConfigurationError, LwrInferError
from lwrinfer.utils.io import ensure_dir, load_config, load_record, read_observations, write_frame

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("diagnose", help="Summarize a finished or interrupted infer run")
    parser.add_argument("--run", required=True, help="Output directory of an infer run")
    parser.add_argument("--burn", type=float, default=0.25, help="Discarded leading fraction of the recorded samples")
    parser.add_argument("--draws", type=int, default=20, help="Posterior draws solved for fields and residuals")
    parser.add_argument("--flow", type=float, help="Flow (veh/min) for the free/congested density-pair table")
    parser.add_argument("--output", "-o", help="Output directory (default <run>/diagnostics)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    # the run directory carries its own resolved config; the global one is ignored
    config = load_config(os.path.join(args.run, RESOLVED_CONFIG_YAML))
    record = load_record(os.path.join(args.run, RECORD_NPZ))
    if record.chain.shape[0] == 0:
        raise ConfigurationError(f"Run {args.run} recorded no samples")
    obs = read_observations(os.path.join(args.run, OBSERVATION_CSV), config.data.burn_in or 0)
    posterior = build_posterior(config, obs)
    rng = seed_generator(config, offset=1)
    out = ensure_dir(args.output or os.path.join(args.run, "diagnostics"))

    start = int(args.burn * record.chain.shape[0])
    samples = record.chain[start:, 0].reshape(-1, record.chain.shape[-1])
    ess = diagnostics.parameter_ess(record)
    rhat = diagnostics.parameter_rhat(record)
    write_frame(pd.DataFrame([ess]), os.path.join(out, "ess.csv"))
    write_frame(pd.DataFrame([rhat]), os.path.join(out, "rhat.csv"))
    write_frame(diagnostics.acceptance_table(record.diagnostics, record.betas), os.path.join(out, "acceptance.csv"))
    intervals = diagnostics.credible_intervals(samples)
    write_frame(intervals, os.path.join(out, "intervals.csv"))
    write_frame(diagnostics.fd_curves(samples, rng), os.path.join(out, "fd_curves.csv"))

    files = ["ess.csv", "rhat.csv", "acceptance.csv", "intervals.csv", "fd_curves.csv"]
    if record.snapshots.shape[0]:
        write_frame(diagnostics.posterior_mean_bcs(record, posterior), os.path.join(out, "posterior_mean_bc.csv"))
        try:
            field = diagnostics.posterior_mean_field(record, posterior, rng, args.draws)
            df = pd.DataFrame(field, columns=[f"t={t:g}" for t in range(field.shape[1])])
            df.insert(0, "x_km", posterior.grid.cell_centers)
            write_frame(df, os.path.join(out, "posterior_mean_field.csv"))
            write_frame(diagnostics.residuals(record, posterior, rng, args.draws), os.path.join(out, "residuals.csv"))
            files += ["posterior_mean_bc.csv", "posterior_mean_field.csv", "residuals.csv"]
        except LwrInferError as e:
            logger.warning(f"Skipping fields and residuals: {e.detail}")
            files.append("posterior_mean_bc.csv")
    else:
        logger.warning("Run holds no snapshots; boundary, field and residual summaries skipped")

    if args.flow is not None:
        pairs = diagnostics.density_pair_table(samples, args.flow)
        write_frame(pairs, os.path.join(out, "density_pairs.csv"))
        files.append("density_pairs.csv")
        summary = diagnostics.density_pair_summary(pairs)
        if summary is None:
            logger.warning(f"Flow {args.flow} exceeds the capacity of every posterior draw")
        else:
            write_frame(summary, os.path.join(out, "density_pairs_summary.csv"))
            files.append("density_pairs_summary.csv")

    return CommandResult[dict](
        result=True,
        data={"ess": ess, "rhat": rhat, "intervals": intervals.to_dict(orient="records"), "files": files, "output": out},
        message=f"Diagnostics written to {out}",
    )
