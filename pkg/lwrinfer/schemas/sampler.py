from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from lwrinfer.schemas.base import ArrayModel, as_float_array


class Walker(ArrayModel):
    """One ensemble member: flat state vector plus cached log densities"""
    state: Any = Field(..., description="Flat state (fd ++ x_in ++ x_out for the traffic posterior)")
    loglik: float = Field(..., description="Untempered log-likelihood")
    logprior: float = Field(..., description="Log-prior density")

    @field_validator("state", mode="before")
    @classmethod
    def _to_array(cls, v):
        return as_float_array(v)

    def log_posterior(self, beta: float) -> float:
        if self.logprior == -np.inf or (beta > 0 and self.loglik == -np.inf):
            return -np.inf
        return beta * self.loglik + self.logprior


class EnsembleState(BaseModel):
    """Walkers of every temperature with the move settings that act on them"""
    walkers: List[List[Walker]] = Field(..., description="walkers[k][l]: temperature k, walker l")
    betas: List[float] = Field(..., description="Inverse temperatures, beta_1 = 1 first")
    omega_in: List[float] = Field(..., description="pCN step size per temperature, inlet")
    omega_out: List[float] = Field(..., description="pCN step size per temperature, outlet")
    move_probs: List[float] = Field(..., description="Probabilities of aies, pcn_inlet, pcn_outlet, swap")
    truncation: int = Field(..., ge=1, description="KL truncation M")
    stretch_a: float = Field(2.0, gt=1, description="Stretch move scale a")
    iteration: int = Field(0, ge=0)

    @property
    def n_temps(self) -> int:
        return len(self.betas)

    @property
    def n_walkers(self) -> int:
        return len(self.walkers[0])


class RwmResult(ArrayModel):
    """Chain of a random-walk Metropolis run"""
    chain: Any
    log_target: Any
    acceptance_rate: float

    @field_validator("chain", "log_target", mode="before")
    @classmethod
    def _to_array(cls, v):
        return as_float_array(v)


class MoveStats(BaseModel):
    """Attempt/accept counters for one move type at one temperature"""
    attempted: int = 0
    accepted: int = 0

    @property
    def rate(self) -> Optional[float]:
        if self.attempted == 0:
            return None
        return self.accepted / self.attempted


class RunDiagnostics(BaseModel):
    """Acceptance statistics of a FES+PT run"""
    iterations: int
    move_counts: Dict[str, int]
    acceptance: Dict[str, List[Optional[float]]] = Field(
        ..., description="move name -> acceptance rate per temperature"
    )
    swap_rates: List[Optional[float]] = Field(..., description="Acceptance per adjacent temperature pair")


class ChainRecord(ArrayModel):
    """Thinned output of a FES+PT run"""
    betas: List[float]
    iterations: Any = Field(..., description="Iteration number of each kept sample")
    chain: Any = Field(..., description="Recorded finite-block components, (samples, temps, walkers, params)")
    loglik: Any = Field(..., description="Untempered log-likelihood, (samples, temps, walkers)")
    logprior: Any = Field(..., description="Log-prior, (samples, temps, walkers)")
    snapshot_iterations: Any = Field(..., description="Iteration number of each cold-chain snapshot")
    snapshots: Any = Field(..., description="Full cold-chain states, (snapshots, walkers, dim)")
    diagnostics: RunDiagnostics

    @field_validator("iterations", "chain", "loglik", "logprior", "snapshot_iterations", "snapshots", mode="before")
    @classmethod
    def _to_array(cls, v):
        return as_float_array(v)

    def cold_chain(self) -> np.ndarray:
        """Cold-temperature samples pooled over walkers, (samples * walkers, params)."""
        if self.chain.size == 0:
            return np.empty((0, self.chain.shape[-1]))
        return self.chain[:, 0].reshape(-1, self.chain.shape[-1])
