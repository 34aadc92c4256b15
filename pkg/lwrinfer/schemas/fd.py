from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from lwrinfer.cores.constants import FD_PARAM_NAMES


class TriangularParams(BaseModel):
    """Parameters of the triangular (bi-linear) fundamental diagram"""
    q_c: float = Field(..., gt=0, description="Flow capacity (veh/min)")
    rho_c: float = Field(..., gt=0, description="Critical density (veh/km)")
    rho_j: float = Field(..., gt=0, description="Jam density (veh/km)")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_ordering(self):
        if not self.rho_c < self.rho_j:
            raise ValueError("rho_c must be smaller than rho_j")
        return self


class DelCastilloParams(BaseModel):
    """Parameters of del Castillo's negative power fundamental diagram.

    The shape is sampled as omega = 1/gamma; gamma is derived on demand.
    """
    z: float = Field(..., gt=0, description="Flow scale (veh/min)")
    rho_j: float = Field(..., gt=0, description="Jam density (veh/km)")
    u: float = Field(..., gt=0, description="Critical-density parameter")
    omega: float = Field(..., gt=0, description="Inverse shape parameter 1/gamma")

    model_config = ConfigDict(frozen=True)

    @property
    def gamma(self) -> float:
        return 1.0 / self.omega

    def as_vector(self) -> Tuple[float, float, float, float]:
        return (self.z, self.rho_j, self.u, self.omega)


class FdPriorBox(BaseModel):
    """Independent uniform prior on (z, rho_j, u, omega)"""
    z: Tuple[float, float] = Field((100.0, 400.0), description="Bounds on z (veh/min)")
    rho_j: Tuple[float, float] = Field((300.0, 800.0), description="Bounds on rho_j (veh/km)")
    u: Tuple[float, float] = Field((1.0, 10.0), description="Bounds on u")
    omega: Tuple[float, float] = Field((0.004, 10.0), description="Bounds on omega")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_bounds(self):
        for name in FD_PARAM_NAMES:
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ValueError(f"Prior bounds for {name} must satisfy 0 < low < high, got ({lo}, {hi})")
        return self

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in FD_PARAM_NAMES])

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in FD_PARAM_NAMES])

    def contains(self, vector) -> bool:
        v = np.asarray(vector, dtype=float)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def log_density(self, vector) -> float:
        """0 inside the box, -inf outside (unnormalized)."""
        return 0.0 if self.contains(vector) else -np.inf

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)
