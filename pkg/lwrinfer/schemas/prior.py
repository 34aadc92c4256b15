from typing import Any, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lwrinfer.schemas.base import ArrayModel, as_float_array


class OuParams(BaseModel):
    """Ornstein-Uhlenbeck parameters of the centred log boundary condition"""
    beta: float = Field(0.22, gt=0, description="Mean-reversion rate (1/min)")
    sigma: float = Field(0.256, gt=0, description="Diffusivity (per sqrt(min))")
    dt: float = Field(1.0, gt=0, description="Sample spacing (min)")

    model_config = ConfigDict(frozen=True)

    @property
    def stationary_variance(self) -> float:
        return self.sigma ** 2 / (2.0 * self.beta)

    @property
    def lag_one_correlation(self) -> float:
        return float(np.exp(-self.beta * self.dt))

    @property
    def innovation_variance(self) -> float:
        return self.stationary_variance * (1.0 - np.exp(-2.0 * self.beta * self.dt))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """log N(x; 0, C) via the AR(1) factorization; x may be (..., n)."""
        x = np.asarray(x, dtype=float)
        v = self.stationary_variance
        tau2 = self.innovation_variance
        innovations = x[..., 1:] - self.lag_one_correlation * x[..., :-1]
        n_innov = x.shape[-1] - 1
        return (
            -0.5 * (np.log(2 * np.pi * v) + x[..., 0] ** 2 / v)
            - 0.5 * n_innov * np.log(2 * np.pi * tau2)
            - 0.5 * np.sum(innovations ** 2, axis=-1) / tau2
        )


class LogOuPrior(ArrayModel):
    """log-OU prior: density = exp(mu + x) with x ~ N(0, C_OU)"""
    mu: Any = Field(..., description="Log-mean curve on the BC time grid")
    ou: OuParams
    cov_eigvecs: Any = Field(..., description="First M eigenvectors of C as columns (n x M)")
    cov_eigvals: Any = Field(..., description="Corresponding eigenvalues, non-increasing")

    @field_validator("mu", "cov_eigvecs", "cov_eigvals", mode="before")
    @classmethod
    def _to_array(cls, v):
        return as_float_array(v)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.cov_eigvecs.shape != (self.mu.size, self.cov_eigvals.size):
            raise ValueError("cov_eigvecs must be (len(mu), M)")
        return self

    @property
    def n(self) -> int:
        return int(self.mu.size)

    @property
    def truncation(self) -> int:
        return int(self.cov_eigvals.size)

    def log_density(self, x: np.ndarray) -> float:
        return float(self.ou.log_density(x))

    def kl_coordinates(self, x: np.ndarray) -> np.ndarray:
        return self.cov_eigvecs.T @ x

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        return self.cov_eigvecs @ coords

    def to_density(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.mu + x)

    def to_coordinates(self, density: np.ndarray) -> np.ndarray:
        return np.log(density) - self.mu


class BoundaryCondition(ArrayModel):
    """Boundary density series stored as OU coordinates with cached densities"""
    x: Any = Field(..., description="OU coordinates on the BC time grid")
    density: Any = Field(..., description="exp(mu + x), veh/km")

    @field_validator("x", "density", mode="before")
    @classmethod
    def _to_array(cls, v):
        return as_float_array(v)

    @model_validator(mode="after")
    def _check_positive(self):
        if self.x.shape != self.density.shape:
            raise ValueError("x and density must have the same length")
        if np.any(self.density <= 0):
            raise ValueError("boundary densities must be strictly positive")
        return self

    @classmethod
    def from_coordinates(cls, x: np.ndarray, prior: LogOuPrior) -> "BoundaryCondition":
        return cls(x=x, density=prior.to_density(x))


class FittedPriorExport(BaseModel):
    """JSON export of a fitted log-OU prior"""
    mu: List[float]
    beta: float
    sigma: float
    dt: float
    M: int
    eigenvalues: List[float]


class OuFitSummary(BaseModel):
    """Posterior summary of an OU hyperparameter fit"""
    beta_mean: float
    sigma_mean: float
    beta_sd: float
    sigma_sd: float
    acceptance_rate: float
    n_curves: int
    curve_length: int
