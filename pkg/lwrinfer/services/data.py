"""Detector data: density estimators, ingestion with a fault policy, and synthetic twins."""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lwrinfer.schemas.fd import DelCastilloParams
from lwrinfer.schemas.grid import Grid
from lwrinfer.schemas.observation import DetectorRecord, GroundTruth, ObservationSet
from lwrinfer.services.fd import make_fd
from lwrinfer.services.model import detector_densities
from lwrinfer.utils.exceptions import ConfigurationError, DataError, EstimatorError, LwrInferError, NoVehiclesError

logger = logging.getLogger(__name__)

# vehicle lengths (m) of types 1-4
VEHICLE_LENGTHS = np.array([4.0, 6.0, 9.0, 16.0])
TYPE_COLUMNS = ["q1", "q2", "q3", "q4"]
DETECTOR_COLUMNS = ["position_km", "minute", "count", "occupancy", "avg_speed_kmh"] + TYPE_COLUMNS


def density_from_speed(count: float, speed: float) -> float:
    """60 * count / speed, veh/km from veh/min and km/h."""
    if not speed > 0:
        raise EstimatorError(f"Average speed must be positive, got {speed}")
    return 60.0 * count / speed


def avg_vehicle_length(counts_by_type: Sequence[int], total: Optional[int] = None) -> float:
    """Count-weighted mean vehicle length in meters."""
    counts = np.asarray(counts_by_type, dtype=float)
    total = counts.sum() if total is None else total
    if total <= 0:
        raise NoVehiclesError()
    return float(counts @ VEHICLE_LENGTHS / total)


def density_from_occupancy(occ: float, length: float) -> float:
    """1000 * occupancy / L, veh/km."""
    if not length > 0:
        raise EstimatorError(f"Vehicle length must be positive, got {length}")
    if not 0 <= occ <= 1:
        raise EstimatorError(f"Occupancy must be a fraction in [0, 1], got {occ}")
    return 1000.0 * occ / length


def load_detector_csv(path: str) -> pd.DataFrame:
    """Read a detector CSV, normalizing percentage occupancy to a fraction."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigurationError(f"Detector file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Could not parse detector file {path}: {e}")
    missing = [c for c in DETECTOR_COLUMNS[:5] if c not in df.columns]
    if missing:
        raise DataError(f"Detector file {path} lacks columns {missing}")
    for col in TYPE_COLUMNS:
        if col not in df.columns:
            df[col] = np.nan
    if df["occupancy"].max() > 1.0:
        logger.info(f"Occupancy in {path} looks like a percentage, dividing by 100")
        df["occupancy"] = df["occupancy"] / 100.0
    return df[DETECTOR_COLUMNS].copy()


def flag_faulty(df: pd.DataFrame) -> pd.DataFrame:
    """Add a `faulty` column marking records that break the record invariants."""
    out = df.copy()
    types = out[TYPE_COLUMNS]
    has_types = types.notna().all(axis=1)
    faulty = (
        out[["position_km", "minute", "count", "occupancy"]].isna().any(axis=1)
        | (out["count"] < 0)
        | (out["count"] != out["count"].round())
        | (out["occupancy"] < 0)
        | (out["occupancy"] > 1)
        | ((out["count"] > 0) & ~(out["avg_speed_kmh"] > 0))
        | (has_types & (types.sum(axis=1) != out["count"]))
        | (has_types & (types < 0).any(axis=1))
    )
    out["faulty"] = faulty
    if faulty.any():
        logger.warning(f"Excluding {int(faulty.sum())} faulty detector records")
    return out


def drop_faulty_detectors(df: pd.DataFrame, threshold: float = 0.2) -> pd.DataFrame:
    """Drop detectors whose share of faulty minutes exceeds threshold."""
    share = df.groupby("position_km")["faulty"].mean()
    bad = share[share > threshold].index
    for pos in bad:
        logger.warning(f"Dropping detector at {pos} km: {share[pos]:.0%} faulty minutes")
    return df[~df["position_km"].isin(bad)].copy()


def clean_detector_frame(df: pd.DataFrame, threshold: float = 0.2) -> pd.DataFrame:
    return drop_faulty_detectors(flag_faulty(df), threshold)


def detector_records(df: pd.DataFrame) -> List[DetectorRecord]:
    """Clean rows as validated records; type counts are None when any is missing."""
    if "faulty" in df.columns:
        df = df[~df["faulty"]]
    records = []
    for row in df.to_dict("records"):
        types = [row[c] for c in TYPE_COLUMNS]
        records.append(
            DetectorRecord(
                position=row["position_km"],
                minute=row["minute"],
                count=int(row["count"]),
                occupancy=row["occupancy"],
                avg_speed=row["avg_speed_kmh"],
                counts_by_type=None if any(pd.isna(t) for t in types) else [int(t) for t in types],
            )
        )
    return records


def to_observation_set(df: pd.DataFrame, burn_in: int) -> ObservationSet:
    """Pivot clean detector records into a detector x minute count matrix."""
    if "faulty" not in df.columns:
        df = flag_faulty(df)
    if df.empty:
        raise DataError("No detector records left after cleaning")
    positions = np.sort(df["position_km"].unique())
    minutes = np.sort(df["minute"].unique())
    good = df[~df["faulty"]]
    table = good.pivot_table(index="position_km", columns="minute", values="count", aggfunc="sum")
    table = table.reindex(index=positions, columns=minutes)
    valid = table.notna().to_numpy()
    counts = table.fillna(0).to_numpy()
    return ObservationSet(
        detector_positions=positions,
        obs_times=minutes,
        counts=counts,
        burn_in=min(burn_in, minutes.size),
        valid=None if valid.all() else valid,
    )


def estimate_densities(df: pd.DataFrame) -> pd.DataFrame:
    """Speed- and occupancy-based density for each clean record.

    Minutes without vehicles reuse the detector's previous average length.
    """
    out = df[~df["faulty"]].copy() if "faulty" in df.columns else df.copy()
    out = out.sort_values(["position_km", "minute"])
    speed = out["avg_speed_kmh"].where(out["avg_speed_kmh"] > 0)
    out["density_speed"] = np.where(out["count"] == 0, 0.0, 60.0 * out["count"] / speed)
    totals = out[TYPE_COLUMNS].sum(axis=1)
    lengths = (out[TYPE_COLUMNS].to_numpy() @ VEHICLE_LENGTHS) / totals.where(totals > 0)
    out["avg_length_m"] = pd.Series(lengths, index=out.index).groupby(out["position_km"]).transform(
        lambda s: s.ffill().bfill()
    )
    out["density_occupancy"] = 1000.0 * out["occupancy"] / out["avg_length_m"]
    return out


def density_comparison_table(df: pd.DataFrame) -> pd.DataFrame:
    """Per-detector summary of the two density estimators."""
    est = estimate_densities(df)
    est["abs_difference"] = (est["density_speed"] - est["density_occupancy"]).abs()
    grouped = est.groupby("position_km")
    return pd.DataFrame(
        {
            "mean_density_speed": grouped["density_speed"].mean(),
            "mean_density_occupancy": grouped["density_occupancy"].mean(),
            "mean_abs_difference": grouped["abs_difference"].mean(),
        }
    ).reset_index()


def load_curves_csv(path: str) -> np.ndarray:
    """Historical density curves: one column per day, one row per minute."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigurationError(f"Curves file not found: {path}")
    if df.shape[0] < 2 or df.shape[1] < 1:
        raise DataError(f"Curves file {path} needs at least one day and two minutes")
    if df.isna().any().any():
        raise DataError(f"Curves file {path} has missing values")
    return df.to_numpy(dtype=float).T


def synthesize_twin(
    true_fd: DelCastilloParams,
    true_bc_in: np.ndarray,
    true_bc_out: np.ndarray,
    grid: Grid,
    detector_positions: Sequence[float],
    obs_times: Sequence[float],
    rng: np.random.Generator,
    noise: str = "poisson",
    burn_in: int = 3,
) -> Tuple[ObservationSet, GroundTruth, np.ndarray]:
    """Noisy detector counts generated by the solver at known parameters.

    Returns the observation set, the ground truth and detector densities.
    """
    fd = make_fd(true_fd)
    times = np.asarray(obs_times, dtype=float)
    try:
        densities = detector_densities(fd, true_bc_in, true_bc_out, grid, detector_positions, times)
    except LwrInferError as e:
        raise ConfigurationError(f"Solver failed at the twin's true parameters: {e.detail}")
    flows = np.asarray(fd.flow(densities))
    if noise == "poisson":
        counts = rng.poisson(flows)
    elif noise == "rounded":
        counts = np.round(flows)
    else:
        raise ConfigurationError(f"Unknown noise model '{noise}'")
    obs = ObservationSet(
        detector_positions=detector_positions, obs_times=times, counts=counts, burn_in=burn_in
    )
    truth = GroundTruth(
        fd=true_fd,
        bc_in_density=np.asarray(true_bc_in, dtype=float).tolist(),
        bc_out_density=np.asarray(true_bc_out, dtype=float).tolist(),
        bc_dt=grid.bc_dt,
        predicted_flow=flows.tolist(),
        noise=noise,
    )
    logger.info(f"Synthesized {obs.n_detectors} detectors x {obs.n_times} minutes, {noise} noise")
    return obs, truth, densities


def twin_detector_frame(obs: ObservationSet, densities: np.ndarray, flows: np.ndarray) -> pd.DataFrame:
    """Detector-CSV rows for a twin: all vehicles type 1 (4 m)."""
    rows = []
    for i, pos in enumerate(obs.detector_positions):
        for j, minute in enumerate(obs.obs_times):
            rho = float(densities[i, j])
            count = int(obs.counts[i, j])
            rows.append(
                {
                    "position_km": float(pos),
                    "minute": float(minute),
                    "count": count,
                    "occupancy": min(rho * VEHICLE_LENGTHS[0] / 1000.0, 1.0),
                    "avg_speed_kmh": 60.0 * float(flows[i, j]) / rho if rho > 0 else 0.0,
                    "q1": count,
                    "q2": 0,
                    "q3": 0,
                    "q4": 0,
                }
            )
    return pd.DataFrame(rows, columns=DETECTOR_COLUMNS)
