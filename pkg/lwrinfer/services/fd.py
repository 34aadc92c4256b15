"""Fundamental diagrams: flow-density relations, wave speeds and branch inversion."""

import logging
from typing import Tuple, Union

import numpy as np
from scipy import optimize, special

from lwrinfer.cores.config import ROOT_XTOL
from lwrinfer.schemas.fd import DelCastilloParams, TriangularParams
from lwrinfer.utils.exceptions import FdDomainError, NoSolutionError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# relative slack tolerated at the ends of [0, rho_j] before raising
DOMAIN_SLACK = 1e-9


def _check_domain(rho: ArrayLike, rho_j: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    slack = DOMAIN_SLACK * rho_j
    if np.any(~np.isfinite(rho)) or np.any(rho < -slack) or np.any(rho > rho_j + slack):
        bad = rho[(~np.isfinite(rho)) | (rho < -slack) | (rho > rho_j + slack)]
        raise FdDomainError(f"Density {bad.flat[0]!r} outside [0, {rho_j}]")
    return np.clip(rho, 0.0, rho_j)


def _scalar_or_array(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


class TriangularFD:
    """Daganzo's triangular fundamental diagram"""

    def __init__(self, params: TriangularParams):
        self.params = params
        self.rho_j = params.rho_j
        self.v_free = params.q_c / params.rho_c
        self.w_cong = params.q_c / (params.rho_j - params.rho_c)

    @property
    def critical_density(self) -> float:
        return self.params.rho_c

    @property
    def capacity(self) -> float:
        return self.params.q_c

    def flow(self, rho: ArrayLike) -> ArrayLike:
        r = _check_domain(rho, self.rho_j)
        q = np.where(
            r <= self.params.rho_c,
            self.v_free * r,
            self.w_cong * (self.rho_j - r),
        )
        return _scalar_or_array(q, rho)

    def wave_speed(self, rho: ArrayLike) -> ArrayLike:
        # exactly rho_c returns the congested slope
        r = _check_domain(rho, self.rho_j)
        c = np.where(r < self.params.rho_c, self.v_free, -self.w_cong)
        return _scalar_or_array(c, rho)

    def max_wave_speed(self) -> float:
        return max(self.v_free, self.w_cong)


class DelCastilloFD:
    """Del Castillo's negative power fundamental diagram.

    q = Z [(u rho / rho_j)^-gamma + (1 - rho / rho_j)^-gamma]^(-1/gamma),
    evaluated in log space so that gamma up to 1/0.004 does not overflow.
    """

    def __init__(self, params: DelCastilloParams):
        self.params = params
        self.rho_j = params.rho_j
        self.z = params.z
        self.u = params.u
        self.gamma = params.gamma

    @property
    def critical_density(self) -> float:
        return self.rho_j * critical_density(self.u, self.params.omega)

    @property
    def capacity(self) -> float:
        return float(self.flow(self.critical_density))

    def _interior(self, r: np.ndarray):
        """Log-flow and softmax branch weights on the open interval."""
        interior = (r > 0.0) & (r < self.rho_j)
        ri = np.where(interior, r, 0.5 * self.rho_j)
        log_a = np.log(self.u * ri / self.rho_j)
        log_b = np.log1p(-ri / self.rho_j)
        terms = np.stack([-self.gamma * log_a, -self.gamma * log_b])
        lse = special.logsumexp(terms, axis=0)
        weights = special.softmax(terms, axis=0)
        log_q = np.log(self.z) - lse / self.gamma
        return interior, ri, log_q, weights

    def flow(self, rho: ArrayLike) -> ArrayLike:
        r = _check_domain(rho, self.rho_j)
        interior, _, log_q, _ = self._interior(r)
        q = np.where(interior, np.exp(log_q), 0.0)
        return _scalar_or_array(q, rho)

    def wave_speed(self, rho: ArrayLike) -> ArrayLike:
        r = _check_domain(rho, self.rho_j)
        interior, ri, log_q, weights = self._interior(r)
        q = np.exp(log_q)
        # d log q / d rho = w_a / rho - w_b / (rho_j - rho)
        c = q * (weights[0] / ri - weights[1] / (self.rho_j - ri))
        c = np.where(interior, c, 0.0)
        c = np.where(r <= 0.0, self.z * self.u / self.rho_j, c)
        c = np.where(r >= self.rho_j, -self.z / self.rho_j, c)
        return _scalar_or_array(c, rho)

    def max_wave_speed(self) -> float:
        # concave flux: |q'| peaks at an endpoint
        return self.z * max(self.u, 1.0) / self.rho_j


FundamentalDiagram = Union[TriangularFD, DelCastilloFD]


def make_fd(params: Union[TriangularParams, DelCastilloParams]) -> FundamentalDiagram:
    """Build the fundamental diagram matching a parameter model."""
    if isinstance(params, TriangularParams):
        return TriangularFD(params)
    return DelCastilloFD(params)


def fd_from_vector(vector) -> DelCastilloFD:
    """Build a del Castillo FD from the sampler vector (z, rho_j, u, omega)."""
    z, rho_j, u, omega = (float(v) for v in vector)
    return DelCastilloFD(DelCastilloParams(z=z, rho_j=rho_j, u=u, omega=omega))


def triangular_flow(rho: ArrayLike, p: TriangularParams) -> ArrayLike:
    return TriangularFD(p).flow(rho)


def delcastillo_flow(rho: ArrayLike, p: DelCastilloParams) -> ArrayLike:
    return DelCastilloFD(p).flow(rho)


def critical_density(u: float, omega: float) -> float:
    """Dimensionless critical density 1 / (1 + u^(gamma/(gamma+1)))."""
    if u <= 0 or omega <= 0:
        raise FdDomainError(f"critical_density needs u > 0 and omega > 0, got u={u}, omega={omega}")
    # gamma / (gamma + 1) == 1 / (1 + omega)
    return 1.0 / (1.0 + u ** (1.0 / (1.0 + omega)))


def wave_speed(rho: ArrayLike, fd: FundamentalDiagram) -> ArrayLike:
    return fd.wave_speed(rho)


def capacity(fd: FundamentalDiagram) -> float:
    return fd.capacity


def density_pair_for_flow(q: float, fd: FundamentalDiagram) -> Tuple[float, float]:
    """Free-flow and congested densities mapping to flow q, by bisection on each branch."""
    rho_c = fd.critical_density
    q_max = fd.capacity
    if q > q_max * (1.0 + 1e-12):
        raise NoSolutionError(f"Flow {q} exceeds capacity {q_max}")
    if q >= q_max:
        return rho_c, rho_c
    if q <= 0:
        raise NoSolutionError(f"Flow must be positive, got {q}")

    def residual(r: float) -> float:
        return float(fd.flow(r)) - q

    rho_free = optimize.bisect(residual, 0.0, rho_c, xtol=ROOT_XTOL, maxiter=500)
    rho_cong = optimize.bisect(residual, rho_c, fd.rho_j, xtol=ROOT_XTOL, maxiter=500)
    logger.debug(f"Flow {q} inverts to densities ({rho_free}, {rho_cong})")
    return rho_free, rho_cong
