"""Posterior summaries for finished runs: ESS, intervals, fields, residuals and FD curves."""

import logging
from typing import Dict, List, Optional, Sequence

import arviz as az
import numpy as np
import pandas as pd

from lwrinfer.cores.constants import FD_PARAM_NAMES
from lwrinfer.schemas.sampler import ChainRecord, RunDiagnostics
from lwrinfer.services.fd import density_pair_for_flow, fd_from_vector
from lwrinfer.services.model import TrafficPosterior, initial_condition
from lwrinfer.services.solver import solve
from lwrinfer.utils.exceptions import LwrInferError, NoSolutionError

logger = logging.getLogger(__name__)


def _chain_dataset(chains: np.ndarray):
    """(chains, draws) array as an arviz dataset with a single variable 'x'."""
    return az.convert_to_dataset(chains)


def effective_sample_size(chains: np.ndarray) -> float:
    """Rank-normalized bulk ESS of (chains, draws) or a single chain."""
    ary = np.atleast_2d(np.asarray(chains, dtype=float))
    n_chain, n_draw = ary.shape
    if n_draw < 4:
        return float(n_chain * n_draw)
    if not np.all(np.isfinite(ary)):
        return float("nan")
    if np.ptp(ary) == 0:
        return 1.0
    return float(az.ess(_chain_dataset(ary), method="bulk")["x"].item())


def potential_scale_reduction(chains: np.ndarray) -> float:
    """Rank-normalized split R-hat of (chains, draws); NaN when undefined."""
    ary = np.atleast_2d(np.asarray(chains, dtype=float))
    if ary.shape[1] < 4 or not np.all(np.isfinite(ary)) or np.ptp(ary) == 0:
        return float("nan")
    return float(az.rhat(_chain_dataset(ary))["x"].item())


def parameter_ess(record: ChainRecord, names: Sequence[str] = FD_PARAM_NAMES) -> Dict[str, float]:
    """ESS of each recorded cold-chain parameter, walkers treated as chains."""
    cold = record.chain[:, 0]  # (samples, walkers, params)
    return {name: effective_sample_size(cold[:, :, i].T) for i, name in enumerate(names[: cold.shape[-1]])}


def parameter_rhat(record: ChainRecord, names: Sequence[str] = FD_PARAM_NAMES) -> Dict[str, float]:
    """R-hat of each recorded cold-chain parameter across walkers."""
    cold = record.chain[:, 0]
    return {name: potential_scale_reduction(cold[:, :, i].T) for i, name in enumerate(names[: cold.shape[-1]])}


def acceptance_table(diag: RunDiagnostics, betas: Sequence[float]) -> pd.DataFrame:
    rows = []
    for move, rates in diag.acceptance.items():
        for k, rate in enumerate(rates):
            rows.append({"move": move, "beta": betas[k], "acceptance": rate, "count": diag.move_counts.get(move, 0)})
    for k, rate in enumerate(diag.swap_rates):
        rows.append({"move": f"swap_{k}_{k + 1}", "beta": betas[k], "acceptance": rate,
                     "count": diag.move_counts.get("swap", 0)})
    return pd.DataFrame(rows)


def credible_intervals(samples: np.ndarray, names: Sequence[str] = FD_PARAM_NAMES, level: float = 0.9) -> pd.DataFrame:
    """Central credible intervals and means of the columns of samples."""
    samples = np.asarray(samples, dtype=float)
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(samples, [tail, 1.0 - tail], axis=0)
    return pd.DataFrame(
        {"param": list(names[: samples.shape[1]]), "mean": samples.mean(axis=0), "lower": lower, "upper": upper}
    )


def trace_frames(record: ChainRecord, names: Sequence[str] = FD_PARAM_NAMES) -> Dict[tuple, pd.DataFrame]:
    """One trace table per (temperature, walker): iteration, parameters, loglik."""
    frames = {}
    n_par = record.chain.shape[-1]
    for k in range(record.chain.shape[1]):
        for l in range(record.chain.shape[2]):
            df = pd.DataFrame(record.chain[:, k, l, :], columns=list(names[:n_par]))
            df.insert(0, "iteration", record.iterations.astype(int))
            df["loglik"] = record.loglik[:, k, l]
            frames[(k, l)] = df
    return frames


def _draw_states(record: ChainRecord, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    states = record.snapshots.reshape(-1, record.snapshots.shape[-1])
    if states.shape[0] == 0:
        raise LwrInferError("Run holds no cold-chain snapshots")
    pick = rng.choice(states.shape[0], size=min(n_draws, states.shape[0]), replace=False)
    return states[np.sort(pick)]


def posterior_mean_bcs(record: ChainRecord, posterior: TrafficPosterior) -> pd.DataFrame:
    """Pointwise posterior-mean boundary densities from cold-chain snapshots."""
    states = record.snapshots.reshape(-1, record.snapshots.shape[-1])
    inlet = np.mean([posterior.prior_in.to_density(posterior.split(s)[1]) for s in states], axis=0)
    outlet = np.mean([posterior.prior_out.to_density(posterior.split(s)[2]) for s in states], axis=0)
    return pd.DataFrame({"time_min": posterior.grid.bc_times, "inlet": inlet, "outlet": outlet})


def posterior_mean_field(
    record: ChainRecord, posterior: TrafficPosterior, rng: np.random.Generator, n_draws: int = 20
) -> np.ndarray:
    """Average solved x-t field over snapshot draws, stored every minute."""
    grid = posterior.grid
    times = np.arange(0.0, grid.t_final + 1e-9, 1.0)
    fields = []
    for state in _draw_states(record, n_draws, rng):
        fd_vector, x_in, x_out = posterior.split(state)
        bc_in = posterior.prior_in.to_density(x_in)
        bc_out = posterior.prior_out.to_density(x_out)
        try:
            fields.append(solve(initial_condition(bc_in, grid), bc_in, bc_out, fd_from_vector(fd_vector), grid, times).values)
        except LwrInferError as e:
            logger.warning(f"Skipping a posterior draw whose solve failed: {e.detail}")
    if not fields:
        raise LwrInferError("No posterior draw could be solved")
    return np.mean(fields, axis=0)


def residuals(
    record: ChainRecord, posterior: TrafficPosterior, rng: np.random.Generator, n_draws: int = 20
) -> pd.DataFrame:
    """Observed minus posterior-mean predicted flow per detector-minute."""
    predictions = []
    for state in _draw_states(record, n_draws, rng):
        try:
            predictions.append(posterior.predicted(state))
        except LwrInferError as e:
            logger.warning(f"Skipping a posterior draw whose solve failed: {e.detail}")
    if not predictions:
        raise LwrInferError("No posterior draw could be solved")
    return residual_frame(posterior, np.mean(predictions, axis=0))


def residual_frame(posterior: TrafficPosterior, predicted: np.ndarray) -> pd.DataFrame:
    obs = posterior.obs
    rows = []
    for i, pos in enumerate(obs.detector_positions):
        for j, minute in enumerate(obs.obs_times):
            rows.append(
                {
                    "detector_km": pos,
                    "minute": minute,
                    "observed": obs.counts[i, j],
                    "predicted": predicted[i, j],
                    "residual": obs.counts[i, j] - predicted[i, j],
                    "in_likelihood": bool(posterior.mask[i, j]),
                }
            )
    return pd.DataFrame(rows)


def fd_curves(samples: np.ndarray, rng: np.random.Generator, n_draws: int = 50, n_points: int = 200) -> pd.DataFrame:
    """Flow-density curves at posterior draws on a common density grid."""
    samples = np.asarray(samples, dtype=float)
    pick = rng.choice(samples.shape[0], size=min(n_draws, samples.shape[0]), replace=False)
    rho_max = samples[pick, 1].max()
    rho = np.linspace(0.0, rho_max, n_points)
    data = {"rho": rho}
    for n, idx in enumerate(np.sort(pick)):
        fd = fd_from_vector(samples[idx])
        data[f"draw_{n}"] = np.where(rho <= fd.rho_j, fd.flow(np.minimum(rho, fd.rho_j)), np.nan)
    return pd.DataFrame(data)


def density_pair_table(samples: np.ndarray, flow: float) -> pd.DataFrame:
    """Free-flow and congested densities for a flow value under each posterior draw."""
    rows: List[dict] = []
    for vector in np.asarray(samples, dtype=float):
        fd = fd_from_vector(vector)
        try:
            rho_free, rho_cong = density_pair_for_flow(flow, fd)
        except NoSolutionError:
            rho_free = rho_cong = np.nan
        rows.append({"rho_free": rho_free, "rho_congested": rho_cong, "capacity": fd.capacity})
    return pd.DataFrame(rows)


def density_pair_summary(table: pd.DataFrame, level: float = 0.9) -> Optional[pd.DataFrame]:
    valid = table.dropna()
    if valid.empty:
        return None
    tail = (1.0 - level) / 2.0
    return valid.quantile([tail, 0.5, 1.0 - tail]).rename_axis("quantile").reset_index()
