import argparse
import logging
import os
from functools import partial

import numpy as np
import pandas as pd

from lwrinfer.cores.constants import MANIFEST_JSON, OBSERVATION_CSV, RECORD_NPZ, RESOLVED_CONFIG_YAML
from lwrinfer.schemas.base import CommandResult
from lwrinfer.schemas.config import RunConfig
from lwrinfer.schemas.sampler import ChainRecord
from lwrinfer.services.diagnostics import parameter_ess, trace_frames
from lwrinfer.services.fes import fes_pt_run, resize_steps
from lwrinfer.services.model import TrafficPosterior
from lwrinfer.commands.common import build_posterior, load_observations
from lwrinfer.utils.exceptions import ConfigurationError
from lwrinfer.utils.io import dump_config, ensure_dir, save_record, write_frame, write_model, write_observations

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("infer", help="Sample the joint FD/boundary posterior with FES and tempering")
    parser.add_argument("--observations", help="Observation CSV, overrides data.observations_path")
    parser.add_argument("--iterations", type=int, help="Iterations, overrides sampler.n_iters")
    parser.add_argument("--resume", action="store_true", help="Continue from <output>/checkpoint")
    parser.add_argument("--output", "-o", required=True, help="Output directory")
    parser.set_defaults(handler=run)


def write_snapshots(record: ChainRecord, posterior: TrafficPosterior, out: str) -> dict:
    """Cold-chain boundary densities, one row per (snapshot, walker)."""
    files = {}
    for side, prior, idx in (("inlet", posterior.prior_in, 1), ("outlet", posterior.prior_out, 2)):
        rows = []
        for s, iteration in enumerate(record.snapshot_iterations):
            for l, state in enumerate(record.snapshots[s]):
                rows.append([int(iteration), l, *prior.to_density(posterior.split(state)[idx])])
        columns = ["iteration", "walker"] + [f"t={t:g}" for t in posterior.grid.bc_times]
        path = os.path.join(out, f"bc_snapshots_{side}.csv")
        write_frame(pd.DataFrame(rows, columns=columns), path)
        files[side] = path
    return files


def run(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    out = ensure_dir(args.output)
    checkpoint_dir = os.path.join(out, "checkpoint")
    if args.resume and not os.path.isdir(checkpoint_dir):
        raise ConfigurationError(f"Nothing to resume: {checkpoint_dir} does not exist")
    settings = config.sampler
    if args.iterations is not None:
        settings = settings.model_copy(update={"n_iters": args.iterations})
        config = config.model_copy(update={"sampler": settings})

    obs = load_observations(config, args.observations)
    posterior = build_posterior(config, obs)
    layout = posterior.build_layout()
    logger.info(
        f"Sampling {posterior.dim} parameters ({layout.moved_dim} moved by stretch) with "
        f"{settings.n_walkers} walkers, {obs.n_detectors} detectors x {obs.n_times} minutes"
    )
    record = fes_pt_run(
        posterior,
        layout,
        settings,
        partial(posterior.initial_state, bc_scale=settings.init_bc_scale),
        workers=getattr(args, "workers", 1),
        checkpoint_dir=checkpoint_dir,
        resume=args.resume,
    )

    chains_dir = ensure_dir(os.path.join(out, "chains"))
    for (k, l), df in trace_frames(record).items():
        write_frame(df, os.path.join(chains_dir, f"chain_T{k}_W{l}.csv"))
    snapshot_files = write_snapshots(record, posterior, out)
    save_record(record, os.path.join(out, RECORD_NPZ))
    write_observations(obs, os.path.join(out, OBSERVATION_CSV))
    resolved = settings.model_copy(
        update={
            "betas": list(record.betas),
            "omega_in": resize_steps(settings.omega_in, len(record.betas)),
            "omega_out": resize_steps(settings.omega_out, len(record.betas)),
            "tune_temperatures": False,
        }
    )
    observations_copy = os.path.abspath(os.path.join(out, OBSERVATION_CSV))
    data = config.data.model_copy(update={"observations_path": observations_copy, "burn_in": obs.burn_in})
    config = config.model_copy(update={"sampler": resolved, "data": data})
    dump_config(config, os.path.join(out, RESOLVED_CONFIG_YAML))

    ess = parameter_ess(record) if record.chain.shape[0] else {}
    manifest = CommandResult[dict](
        result=True,
        data={
            "config": config.model_dump(mode="json"),
            "seed": settings.seed,
            "betas": list(record.betas),
            "n_samples": int(record.chain.shape[0]),
            "diagnostics": record.diagnostics.model_dump(),
            "ess": ess,
            "files": {"chains": chains_dir, "snapshots": snapshot_files, "record": RECORD_NPZ},
            "cold_loglik_mean": float(np.mean(record.loglik[:, 0])) if record.loglik.size else None,
        },
        message="Run complete",
    )
    write_model(manifest, os.path.join(out, MANIFEST_JSON))
    return CommandResult[dict](
        result=True,
        data={"output": out, "betas": list(record.betas), "ess": ess, "diagnostics": record.diagnostics.model_dump()},
        message=f"Posterior samples written to {out}",
    )
