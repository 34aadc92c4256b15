"""Inverse-temperature schedules for replica exchange."""

import logging
import math
from typing import Callable, Dict, List

import numpy as np
from scipy import optimize

from lwrinfer.utils.exceptions import LwrInferError

logger = logging.getLogger(__name__)

FALLBACK_SCHEDULE = [1.0, 0.76, 0.58, 0.44]
TARGET_SWAP_RATE = 0.23
MAX_TEMPERATURES = 32

# pilot(beta, rng) -> untempered log-likelihood samples from a short run at beta
Pilot = Callable[[float, np.random.Generator], np.ndarray]


def geometric_schedule(base_beta: float, n_temps: int) -> List[float]:
    """n_temps inverse temperatures from 1 down to base_beta with a constant ratio."""
    if n_temps < 1:
        raise ValueError(f"n_temps must be >= 1, got {n_temps}")
    if n_temps == 1:
        return [1.0]
    return [float(base_beta ** (k / (n_temps - 1))) for k in range(n_temps)]


def expected_swap_rate(
    loglik_a: np.ndarray, loglik_b: np.ndarray, beta_a: float, beta_b: float, max_pairs: int = 250000
) -> float:
    """Average of min(1, exp((beta_a - beta_b)(l_b - l_a))) over sample pairs."""
    la = np.asarray(loglik_a, dtype=float)
    lb = np.asarray(loglik_b, dtype=float)
    la = la[np.isfinite(la)]
    lb = lb[np.isfinite(lb)]
    if la.size == 0 or lb.size == 0:
        raise LwrInferError("Pilot run produced no finite log-likelihoods")
    stride_a = max(1, int(math.ceil(la.size * lb.size / max_pairs)))
    diff = lb[None, :] - la[::stride_a, None]
    log_ratio = np.minimum(0.0, (beta_a - beta_b) * diff)
    return float(np.mean(np.exp(log_ratio)))


def tune_schedule(
    pilot: Pilot,
    base_beta: float,
    rng: np.random.Generator,
    target_rate: float = TARGET_SWAP_RATE,
    xtol: float = 0.01,
    max_pilots: int = 12,
) -> List[float]:
    """Geometric schedule from 1 to base_beta with adjacent swap rates near target_rate.

    The nearest neighbour of beta = 1 is located by bisection on pilot runs,
    the resulting ratio fixes the number of temperatures, and the schedule is
    refitted as exactly geometric. Pilot failures fall back to FALLBACK_SCHEDULE.
    """
    if not 0 < base_beta < 1:
        raise ValueError(f"base_beta must lie in (0, 1), got {base_beta}")
    cache: Dict[float, np.ndarray] = {}

    def samples(beta: float) -> np.ndarray:
        if beta not in cache:
            if len(cache) >= max_pilots:
                raise LwrInferError(f"Pilot budget of {max_pilots} runs exhausted")
            cache[beta] = np.asarray(pilot(beta, rng), dtype=float)
        return cache[beta]

    def excess_rate(beta: float) -> float:
        return expected_swap_rate(samples(1.0), samples(beta), 1.0, beta) - target_rate

    try:
        if excess_rate(base_beta) >= 0:
            logger.info(f"Swap rate between 1 and {base_beta} already above {target_rate}, using 2 temperatures")
            return [1.0, float(base_beta)]
        neighbour = optimize.bisect(excess_rate, base_beta, 1.0, xtol=xtol, maxiter=max_pilots)
    except (LwrInferError, RuntimeError, ValueError) as e:
        logger.warning(f"Temperature tuning failed ({e}), falling back to {FALLBACK_SCHEDULE}")
        return list(FALLBACK_SCHEDULE)

    neighbour = min(max(neighbour, base_beta), 1.0 - xtol)
    n_temps = 1 + int(math.ceil(math.log(base_beta) / math.log(neighbour) - 1e-9))
    n_temps = min(max(n_temps, 2), MAX_TEMPERATURES)
    schedule = geometric_schedule(base_beta, n_temps)
    logger.info(f"Tuned schedule: neighbour of 1 at {neighbour:.4f}, {n_temps} temperatures {schedule}")
    return schedule
