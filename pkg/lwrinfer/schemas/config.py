from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from lwrinfer.schemas.fd import DelCastilloParams, FdPriorBox
from lwrinfer.schemas.grid import Grid
from lwrinfer.schemas.observation import DEFAULT_DETECTOR_POSITIONS

Knots = List[Tuple[float, float]]


class OuSection(BaseModel):
    """Boundary-condition prior settings"""
    beta: float = Field(0.22, gt=0, description="OU mean-reversion rate (1/min)")
    sigma: float = Field(0.256, gt=0, description="OU diffusivity")
    mu_in_knots: Knots = Field(
        [(0.0, 30.0), (15.0, 55.0), (30.0, 45.0), (48.0, 35.0)],
        description="(minute, veh/km) knots of the inlet mean density when no fitted prior is given",
    )
    mu_out_knots: Knots = Field(
        [(0.0, 30.0), (20.0, 70.0), (35.0, 50.0), (48.0, 40.0)],
        description="(minute, veh/km) knots of the outlet mean density when no fitted prior is given",
    )
    prior_in_path: Optional[str] = Field(None, description="Fitted inlet prior JSON (overrides knots)")
    prior_out_path: Optional[str] = Field(None, description="Fitted outlet prior JSON (overrides knots)")
    smoothing_window: int = Field(5, ge=1, description="Moving-average window (min) for the fitted mean")
    fit_iterations: int = Field(5000, ge=1, description="RWM iterations of the OU hyperparameter fit")

    @field_validator("mu_in_knots", "mu_out_knots")
    @classmethod
    def _positive_knots(cls, v):
        if len(v) < 1 or any(d <= 0 for _, d in v):
            raise ValueError("mean-curve knots need at least one point with positive density")
        return v


class SamplerSection(BaseModel):
    """FES with parallel tempering"""
    n_walkers: int = Field(13, ge=3, description="Walkers per temperature")
    truncation: int = Field(4, ge=1, description="KL modes moved by the stretch move")
    stretch_a: float = Field(2.0, gt=1, description="Stretch move scale")
    move_probs: List[float] = Field(
        [0.25, 0.125, 0.125, 0.5], description="Probabilities of aies, pcn_inlet, pcn_outlet, swap"
    )
    betas: List[float] = Field([1.0, 0.76, 0.58, 0.44], description="Inverse temperatures")
    omega_in: List[float] = Field([0.155, 0.17, 0.2, 0.25], description="pCN step sizes, inlet")
    omega_out: List[float] = Field([0.078, 0.09, 0.11, 0.15], description="pCN step sizes, outlet")
    n_iters: int = Field(102000, ge=0, description="Controller iterations")
    thin: int = Field(100, ge=1, description="Keep every thin-th iteration")
    snapshot_every: Optional[int] = Field(None, ge=1, description="Cold-chain snapshot spacing, defaults to 10 * thin")
    seed: Optional[int] = Field(0, description="Root seed; None draws fresh entropy")
    init_bc_scale: float = Field(0.1, gt=0, description="Scale of prior draws used for initial BCs")
    init_retries: int = Field(20, ge=1, description="Attempts to start a walker at finite posterior")
    tune_temperatures: bool = Field(False, description="Replace betas by a tuned geometric schedule")
    base_beta: float = Field(0.44, gt=0, lt=1, description="Hottest inverse temperature when tuning")
    pilot_iters: int = Field(200, ge=1, description="Iterations per tuning pilot run")

    @field_validator("move_probs")
    @classmethod
    def _check_probs(cls, v):
        if len(v) != 4 or any(p < 0 for p in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("move_probs must be 4 non-negative numbers summing to 1")
        return v

    @model_validator(mode="after")
    def _check_schedule(self):
        b = self.betas
        if not b or b[0] != 1.0 or any(x <= y for x, y in zip(b, b[1:])) or b[-1] <= 0:
            raise ValueError("betas must start at 1 and decrease strictly, staying positive")
        if len(self.omega_in) != len(b) or len(self.omega_out) != len(b):
            raise ValueError("omega_in and omega_out need one step size per temperature")
        if any(not 0 < w <= 1 for w in self.omega_in + self.omega_out):
            raise ValueError("pCN step sizes must lie in (0, 1]")
        if self.n_walkers < self.truncation + 2:
            raise ValueError(f"n_walkers must be at least truncation + 2 = {self.truncation + 2}")
        return self

    @property
    def snapshot_spacing(self) -> int:
        return self.snapshot_every or 10 * self.thin


class DataSection(BaseModel):
    """Input files and observation handling"""
    observations_path: Optional[str] = Field(None, description="Observation CSV (detector_km, minute, count)")
    detectors_path: Optional[str] = Field(None, description="Raw detector CSV")
    curves_in_path: Optional[str] = Field(None, description="Historical inlet density curves CSV")
    curves_out_path: Optional[str] = Field(None, description="Historical outlet density curves CSV")
    burn_in: Optional[int] = Field(None, ge=0, description="Excluded leading minutes; None derives it")
    min_free_speed: float = Field(100.0, gt=0, description="Slowest free-flow speed for the burn-in (km/h)")
    mode: str = Field("instantaneous", description="Observation operator mode: instantaneous or averaged")
    fault_threshold: float = Field(0.2, ge=0, le=1, description="Faulty-minute share above which a detector is dropped")

    @field_validator("mode")
    @classmethod
    def _check_mode(cls, v):
        if v not in ("instantaneous", "averaged"):
            raise ValueError("mode must be 'instantaneous' or 'averaged'")
        return v


class TwinSection(BaseModel):
    """Synthetic-twin generation"""
    truth: DelCastilloParams = Field(DelCastilloParams(z=250.0, rho_j=500.0, u=3.1, omega=0.2))
    detector_positions: List[float] = Field(list(DEFAULT_DETECTOR_POSITIONS), description="Detector positions (km)")
    obs_minutes: Optional[int] = Field(None, ge=1, description="Observation minutes, defaults to t_final + 1")
    noise: str = Field("poisson", description="poisson or rounded")
    sample_bcs: bool = Field(True, description="Draw true BCs from the prior instead of using the mean curves")

    @field_validator("noise")
    @classmethod
    def _check_noise(cls, v):
        if v not in ("poisson", "rounded"):
            raise ValueError("noise must be 'poisson' or 'rounded'")
        return v


class RunConfig(BaseModel):
    """Fully resolved run configuration"""
    grid: Grid = Field(default_factory=Grid)
    fd_prior: FdPriorBox = Field(default_factory=FdPriorBox)
    ou: OuSection = Field(default_factory=OuSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    data: DataSection = Field(default_factory=DataSection)
    twin: TwinSection = Field(default_factory=TwinSection)

    @model_validator(mode="after")
    def _check_twin_truth(self):
        if not self.fd_prior.contains(self.twin.truth.as_vector()):
            raise ValueError("twin.truth must lie inside fd_prior")
        return self
