"""log-OU boundary-condition prior: covariance, exact AR(1) sampling, KL modes and fitting."""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, ndimage, signal

from lwrinfer.schemas.prior import (
    BoundaryCondition,
    FittedPriorExport,
    LogOuPrior,
    OuFitSummary,
    OuParams,
)
from lwrinfer.services.samplers import KlProjector, rwm
from lwrinfer.utils.exceptions import ConfigurationError, DataError, KlDecompositionError

logger = logging.getLogger(__name__)

# lower bound on sigma in the OU fit; degenerate curves push sigma to zero
SIGMA_FLOOR = 1e-6


def ou_covariance(ou: OuParams, n: int) -> np.ndarray:
    """Stationary covariance (sigma^2 / 2 beta) exp(-beta dt |s - t|)."""
    if n < 2:
        raise ConfigurationError(f"OU covariance needs n >= 2, got {n}")
    lags = np.arange(n) * ou.dt
    return linalg.toeplitz(ou.stationary_variance * np.exp(-ou.beta * lags))


def ou_precision(ou: OuParams, n: int) -> np.ndarray:
    """Tridiagonal AR(1) precision matrix, the inverse of ou_covariance."""
    phi = ou.lag_one_correlation
    tau2 = ou.innovation_variance
    diag = np.full(n, (1.0 + phi ** 2) / tau2)
    diag[0] = diag[-1] = 1.0 / tau2
    off = np.full(n - 1, -phi / tau2)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def ou_log_density(x: np.ndarray, ou: OuParams) -> np.ndarray:
    """log N(x; 0, C) through the AR(1) factorization; x may be (..., n)."""
    return ou.log_density(x)


def ar1_filter(noise: np.ndarray, ou: OuParams) -> np.ndarray:
    """Map standard normal noise (..., n) to stationary OU paths."""
    noise = np.asarray(noise, dtype=float)
    scaled = noise * np.sqrt(ou.innovation_variance)
    scaled[..., 0] = noise[..., 0] * np.sqrt(ou.stationary_variance)
    return signal.lfilter([1.0], [1.0, -ou.lag_one_correlation], scaled, axis=-1)


def kl_decompose(C: np.ndarray, M: int) -> Tuple[np.ndarray, np.ndarray]:
    """Leading M eigenpairs of C, descending, first nonzero component positive."""
    n = C.shape[0]
    if not 1 <= M <= n:
        raise ConfigurationError(f"KL truncation must lie in [1, {n}], got {M}")
    try:
        vals, vecs = linalg.eigh(C, subset_by_index=[n - M, n - 1])
    except (linalg.LinAlgError, ValueError) as e:
        raise KlDecompositionError(f"Eigendecomposition failed: {e}")
    vals = vals[::-1]
    vecs = vecs[:, ::-1].copy()
    if np.any(vals <= 0):
        raise KlDecompositionError("Covariance is not positive definite")
    for k in range(M):
        nonzero = np.flatnonzero(np.abs(vecs[:, k]) > 1e-12)
        if nonzero.size and vecs[nonzero[0], k] < 0:
            vecs[:, k] *= -1.0
    return vecs, vals


def build_prior(mu: np.ndarray, ou: OuParams, M: int) -> LogOuPrior:
    """Assemble the log-OU prior on the grid of mu (spacing ou.dt)."""
    mu = np.asarray(mu, dtype=float)
    J, eigvals = kl_decompose(ou_covariance(ou, mu.size), M)
    logger.info(f"Built log-OU prior: n={mu.size}, M={M}, beta={ou.beta}, sigma={ou.sigma}, dt={ou.dt}")
    return LogOuPrior(mu=mu, ou=ou, cov_eigvecs=J, cov_eigvals=eigvals)


def sample_prior_coordinates(prior: LogOuPrior, rng: np.random.Generator) -> np.ndarray:
    return ar1_filter(rng.standard_normal(prior.n), prior.ou)


def sample_prior_bc(prior: LogOuPrior, rng: np.random.Generator) -> BoundaryCondition:
    """Draw a boundary condition exp(mu + x) with x ~ N(0, C)."""
    return BoundaryCondition.from_coordinates(sample_prior_coordinates(prior, rng), prior)


def prior_projector(prior: LogOuPrior) -> KlProjector:
    return KlProjector(prior.cov_eigvecs)


def piecewise_linear_mu(knots: Sequence[Tuple[float, float]], times: np.ndarray) -> np.ndarray:
    """Log of a piecewise-linear density curve given (minute, veh/km) knots."""
    knots = sorted(knots)
    minutes = np.array([k[0] for k in knots], dtype=float)
    densities = np.array([k[1] for k in knots], dtype=float)
    if np.any(densities <= 0):
        raise ConfigurationError("Mean-curve knots must have positive densities")
    return np.log(np.interp(times, minutes, densities))


def interpolate_mu(mu: np.ndarray, mu_dt: float, times: np.ndarray) -> np.ndarray:
    """Linearly interpolate a log-mean fitted on spacing mu_dt onto new times."""
    src = np.arange(len(mu)) * mu_dt
    if times[-1] > src[-1] + 1e-9:
        raise ConfigurationError(f"Mean curve covers {src[-1]} min, need {times[-1]} min")
    return np.interp(times, src, mu)


def fit_log_mean(curves: np.ndarray, window: int = 5) -> np.ndarray:
    """Pointwise mean of log-curves followed by a moving-average smoother."""
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    if curves.shape[0] < 1:
        raise DataError("Need at least one curve to fit the mean")
    if np.any(~np.isfinite(curves)) or np.any(curves <= 0):
        raise DataError("Density curves must be finite and strictly positive")
    mean = np.log(curves).mean(axis=0)
    if window <= 1:
        return mean
    return ndimage.uniform_filter1d(mean, size=window, mode="nearest")


def ou_log_likelihood(params: np.ndarray, centred: np.ndarray, dt: float = 1.0) -> float:
    """Gaussian log-likelihood of centred curves under OU(beta, sigma), flat positive prior."""
    beta, sigma = params
    if beta <= 0 or sigma < SIGMA_FLOOR:
        return -np.inf
    ou = OuParams(beta=beta, sigma=sigma, dt=dt)
    return float(np.sum(ou_log_density(centred, ou)))


def _moment_estimate(centred: np.ndarray, dt: float) -> Tuple[float, float, float]:
    lagged = np.sum(centred[:, 1:] * centred[:, :-1])
    energy = np.sum(centred[:, :-1] ** 2)
    phi = float(np.clip(lagged / energy if energy > 0 else 0.5, 0.05, 0.999))
    var = max(float(np.mean(centred ** 2)), SIGMA_FLOOR ** 2)
    beta = -np.log(phi) / dt
    sigma = max(np.sqrt(2 * beta * var), 2 * SIGMA_FLOOR)
    return beta, sigma, phi


def fit_ou(
    curves: np.ndarray,
    mu: np.ndarray,
    rng: np.random.Generator,
    n_iters: int = 5000,
    dt: float = 1.0,
    proposal_cov: Optional[np.ndarray] = None,
    burn: float = 0.2,
) -> Tuple[np.ndarray, OuFitSummary]:
    """Random-walk Metropolis over (beta, sigma) for log-curves centred by mu.

    mu is either one curve shared by all rows or one row per curve, which
    lets inlet and outlet curves be pooled with their own means.

    Returns the post-burn chain (rows of beta, sigma) and a summary.
    """
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    if curves.shape[0] < 1 or curves.shape[1] < 2:
        raise DataError(f"OU fit needs curves of length >= 2, got shape {curves.shape}")
    if curves.shape[0] < 2:
        logger.warning("Fitting OU to a single curve, posterior will be broad")
    centred = curves - np.atleast_2d(np.asarray(mu, dtype=float))
    beta0, sigma0, phi = _moment_estimate(centred, dt)
    n_total = centred.size
    if proposal_cov is None:
        sd_beta = np.sqrt((1 - phi ** 2) / n_total) / phi / dt
        sd_sigma = sigma0 / np.sqrt(2 * n_total)
        proposal_cov = (2.38 ** 2 / 2) * np.diag([sd_beta ** 2, sd_sigma ** 2])
    logger.info(f"Fitting OU to {curves.shape[0]} curves, start beta={beta0:.4f}, sigma={sigma0:.4f}")

    result = rwm(
        lambda p: ou_log_likelihood(p, centred, dt),
        np.array([beta0, sigma0]),
        proposal_cov,
        n_iters,
        rng,
    )
    chain = result.chain[int(burn * n_iters):]
    summary = OuFitSummary(
        beta_mean=float(chain[:, 0].mean()),
        sigma_mean=float(chain[:, 1].mean()),
        beta_sd=float(chain[:, 0].std()),
        sigma_sd=float(chain[:, 1].std()),
        acceptance_rate=result.acceptance_rate,
        n_curves=curves.shape[0],
        curve_length=curves.shape[1],
    )
    logger.info(
        f"OU fit: beta={summary.beta_mean:.4f}, sigma={summary.sigma_mean:.4f}, "
        f"acceptance {summary.acceptance_rate:.3f}"
    )
    return chain, summary


def export_prior(prior: LogOuPrior) -> FittedPriorExport:
    return FittedPriorExport(
        mu=prior.mu.tolist(),
        beta=prior.ou.beta,
        sigma=prior.ou.sigma,
        dt=prior.ou.dt,
        M=prior.truncation,
        eigenvalues=prior.cov_eigvals.tolist(),
    )


def import_prior(export: FittedPriorExport, times: np.ndarray, M: Optional[int] = None) -> LogOuPrior:
    """Rebuild a prior from an exported fit on a (possibly finer) BC time grid."""
    mu = interpolate_mu(np.asarray(export.mu), export.dt, times)
    dt = float(times[1] - times[0])
    return build_prior(mu, OuParams(beta=export.beta, sigma=export.sigma, dt=dt), M or export.M)
