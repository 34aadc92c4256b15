import math
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lwrinfer.schemas.base import ArrayModel, as_float_array


class Grid(BaseModel):
    """Space/time discretization of the road segment"""
    road_length: float = Field(5.0, gt=0, description="Road length (km)")
    n_cells: int = Field(259, ge=3, description="Number of finite volume cells")
    t_final: float = Field(48.0, gt=0, description="Time horizon (min)")
    bc_dt: float = Field(0.025, gt=0, description="Boundary-condition sample spacing (min)")
    cfl_number: float = Field(0.9, gt=0, le=1, description="Courant number")
    second_order: bool = Field(True, description="Use MUSCL minmod reconstruction with Heun sub-steps")

    model_config = ConfigDict(frozen=True)

    @property
    def dx(self) -> float:
        return self.road_length / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def n_bc(self) -> int:
        """Number of boundary-condition samples covering [0, t_final]."""
        return int(math.floor(self.t_final / self.bc_dt + 1e-9)) + 1

    @property
    def bc_times(self) -> np.ndarray:
        return np.arange(self.n_bc) * self.bc_dt

    @model_validator(mode="after")
    def _check_bc_grid(self):
        ratio = self.t_final / self.bc_dt
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("t_final must be a whole multiple of bc_dt")
        return self


class DensityField(ArrayModel):
    """Density per (cell, stored time) with cumulative boundary fluxes"""
    values: Any = Field(..., description="Density matrix (n_cells x n_times), veh/km")
    times: Any = Field(..., description="Stored output times (min)")
    cum_inflow: Optional[Any] = Field(None, description="Integrated inlet flux at each stored time (veh)")
    cum_outflow: Optional[Any] = Field(None, description="Integrated outlet flux at each stored time (veh)")

    @field_validator("values", "times", "cum_inflow", "cum_outflow", mode="before")
    @classmethod
    def _to_array(cls, v):
        if v is None:
            return None
        return as_float_array(v)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.times.size:
            raise ValueError("values must be (n_cells, n_times)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        return self

    def mass(self, dx: float) -> np.ndarray:
        """Total vehicles on the road at each stored time."""
        return self.values.sum(axis=0) * dx
