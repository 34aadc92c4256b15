from typing import Any, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator

from lwrinfer.schemas.base import ArrayModel, as_float_array
from lwrinfer.schemas.fd import DelCastilloParams, FdPriorBox, TriangularParams
from lwrinfer.schemas.prior import BoundaryCondition

# default detector layout (km)
DEFAULT_DETECTOR_POSITIONS = [0.0, 1.0, 2.0, 2.5, 3.0, 4.0, 4.5, 5.0]


class ObservationSet(ArrayModel):
    """Detector counts (veh/min, summed over lanes) on a detector x minute grid"""
    detector_positions: Any = Field(..., description="Detector positions (km)")
    obs_times: Any = Field(..., description="Observation times (min), increasing")
    counts: Any = Field(..., description="Counts, detector x time")
    burn_in: int = Field(3, ge=0, description="Leading observation times excluded from the likelihood")
    valid: Optional[Any] = Field(None, description="Mask of usable entries; None means all")

    @field_validator("detector_positions", "obs_times", "counts", mode="before")
    @classmethod
    def _to_array(cls, v):
        return as_float_array(v)

    @field_validator("valid", mode="before")
    @classmethod
    def _to_mask(cls, v):
        if v is None:
            return None
        mask = np.array(v, dtype=bool)
        mask.setflags(write=False)
        return mask

    @model_validator(mode="after")
    def _check_counts(self):
        shape = (self.detector_positions.size, self.obs_times.size)
        if self.counts.shape != shape:
            raise ValueError(f"counts must have shape {shape}, got {self.counts.shape}")
        if np.any(self.counts < 0) or np.any(self.counts != np.round(self.counts)):
            raise ValueError("counts must be non-negative integers")
        if self.obs_times.size > 1 and np.any(np.diff(self.obs_times) <= 0):
            raise ValueError("obs_times must be strictly increasing")
        if self.valid is not None and self.valid.shape != shape:
            raise ValueError("valid mask must match counts")
        if self.burn_in > self.obs_times.size:
            raise ValueError("burn_in exceeds the number of observation times")
        return self

    @property
    def n_detectors(self) -> int:
        return int(self.detector_positions.size)

    @property
    def n_times(self) -> int:
        return int(self.obs_times.size)

    def likelihood_mask(self) -> np.ndarray:
        """Entries that enter the likelihood: after burn-in and valid."""
        mask = np.ones(self.counts.shape, dtype=bool)
        mask[:, : self.burn_in] = False
        if self.valid is not None:
            mask &= self.valid
        return mask

    def check_geometry(self, road_length: float, t_final: float) -> None:
        if np.any(self.detector_positions < 0) or np.any(self.detector_positions > road_length + 1e-9):
            raise ValueError(f"Detector positions must lie in [0, {road_length}] km")
        if self.obs_times[0] < 0 or self.obs_times[-1] > t_final + 1e-9:
            raise ValueError(f"Observation times must lie in [0, {t_final}] min")


class DetectorRecord(BaseModel):
    """One detector-minute as reported by a loop detector"""
    position: float = Field(..., ge=0, description="Detector position (km)")
    minute: float = Field(..., ge=0, description="Minute of the record")
    count: int = Field(..., ge=0, description="Vehicles per minute summed over lanes")
    occupancy: float = Field(..., ge=0, le=1, description="Occupancy as a fraction")
    avg_speed: float = Field(..., description="Average speed (km/h)")
    counts_by_type: Optional[List[int]] = Field(None, description="Counts of vehicle types 1-4")

    @field_validator("counts_by_type")
    @classmethod
    def _four_types(cls, v):
        if v is not None and (len(v) != 4 or any(c < 0 for c in v)):
            raise ValueError("counts_by_type must hold 4 non-negative integers")
        return v

    @model_validator(mode="after")
    def _check_total(self):
        if self.counts_by_type is not None and sum(self.counts_by_type) != self.count:
            raise ValueError(f"count {self.count} != sum of counts_by_type {sum(self.counts_by_type)}")
        return self


class Theta(BaseModel):
    """Full parameter: fundamental diagram plus both boundary conditions.

    A del Castillo FD must lie inside the prior box, taken from the validation
    context key "fd_box" when given and the default box otherwise.
    """
    fd: Union[DelCastilloParams, TriangularParams]
    bc_in: BoundaryCondition
    bc_out: BoundaryCondition

    @model_validator(mode="after")
    def _check_support(self, info: ValidationInfo):
        if isinstance(self.fd, DelCastilloParams):
            box = (info.context or {}).get("fd_box") or FdPriorBox()
            if not box.contains(self.fd.as_vector()):
                raise ValueError(f"FD parameters {list(self.fd.as_vector())} lie outside the prior box")
        for side, bc in (("bc_in", self.bc_in), ("bc_out", self.bc_out)):
            if np.any(bc.density >= self.fd.rho_j):
                raise ValueError(f"{side} densities must stay below rho_j={self.fd.rho_j}")
        return self


class GroundTruth(BaseModel):
    """Generating parameters of a synthetic twin"""
    fd: DelCastilloParams
    bc_in_density: List[float]
    bc_out_density: List[float]
    bc_dt: float
    predicted_flow: List[List[float]]
    noise: str
    seed: Optional[int] = None
