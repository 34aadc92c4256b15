import json
import logging
import os
from typing import Optional, Type, TypeVar

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ValidationError

from lwrinfer.schemas.config import RunConfig
from lwrinfer.schemas.grid import DensityField
from lwrinfer.schemas.observation import ObservationSet
from lwrinfer.schemas.sampler import ChainRecord, RunDiagnostics
from lwrinfer.utils.exceptions import ConfigurationError, DataError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

OBSERVATION_COLUMNS = ["detector_km", "minute", "count"]


def load_config(path: Optional[str]) -> RunConfig:
    """Read a YAML run config; a missing path or an empty document gives the defaults."""
    if not path:
        return RunConfig()
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Config file {path} is not valid YAML: {e}")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid config {path}: {e}")


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_model(model: BaseModel, path: str) -> None:
    with open(path, "w") as f:
        f.write(model.model_dump_json(indent=2))


def read_model(cls: Type[M], path: str) -> M:
    if not os.path.exists(path):
        raise ConfigurationError(f"File not found: {path}")
    with open(path) as f:
        try:
            return cls.model_validate(json.load(f))
        except (json.JSONDecodeError, ValidationError) as e:
            raise DataError(f"Could not read {cls.__name__} from {path}: {e}")


def read_series(path: str, column: Optional[str] = None) -> np.ndarray:
    """One numeric column of a CSV (named `column`, else the last one)."""
    if not os.path.exists(path):
        raise ConfigurationError(f"File not found: {path}")
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Could not parse {path}: {e}")
    if column is not None and column not in df.columns:
        raise DataError(f"{path} has no column '{column}'")
    values = (df[column] if column else df.iloc[:, -1]).to_numpy(dtype=float)
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise DataError(f"{path} must hold finite values")
    return values


def write_field(field: DensityField, cell_centers: np.ndarray, path: str) -> None:
    """Density field as a CSV with one row per cell and one column per stored time."""
    df = pd.DataFrame(field.values, columns=[f"t={t:g}" for t in field.times])
    df.insert(0, "x_km", cell_centers)
    df.to_csv(path, index=False, float_format="%.12g")


def write_observations(obs: ObservationSet, path: str) -> None:
    rows = [
        {"detector_km": pos, "minute": t, "count": int(obs.counts[i, j])}
        for i, pos in enumerate(obs.detector_positions)
        for j, t in enumerate(obs.obs_times)
        if obs.valid is None or obs.valid[i, j]
    ]
    pd.DataFrame(rows, columns=OBSERVATION_COLUMNS).to_csv(path, index=False)


def read_observations(path: str, burn_in: int) -> ObservationSet:
    """Observation CSV (detector_km, minute, count) into a detector x minute set."""
    if not os.path.exists(path):
        raise ConfigurationError(f"Observation file not found: {path}")
    df = pd.read_csv(path)
    missing = [c for c in OBSERVATION_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"Observation file {path} lacks columns {missing}")
    if df.empty:
        raise DataError(f"Observation file {path} is empty")
    table = df.pivot_table(index="detector_km", columns="minute", values="count", aggfunc="sum")
    valid = table.notna().to_numpy()
    try:
        return ObservationSet(
            detector_positions=table.index.to_numpy(dtype=float),
            obs_times=table.columns.to_numpy(dtype=float),
            counts=table.fillna(0).to_numpy(),
            burn_in=min(burn_in, table.shape[1]),
            valid=None if valid.all() else valid,
        )
    except ValidationError as e:
        raise DataError(f"Invalid observations in {path}: {e}")


def write_frame(df: pd.DataFrame, path: str) -> None:
    df.to_csv(path, index=False, float_format="%.12g")
    logger.debug(f"Wrote {len(df)} rows to {path}")


def dump_config(config: RunConfig, path: str) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)


def save_record(record: ChainRecord, path: str) -> None:
    np.savez(
        path,
        betas=np.asarray(record.betas),
        iterations=record.iterations,
        chain=record.chain,
        loglik=record.loglik,
        logprior=record.logprior,
        snapshot_iterations=record.snapshot_iterations,
        snapshots=record.snapshots,
        diagnostics=np.array(record.diagnostics.model_dump_json()),
    )


def load_record(path: str) -> ChainRecord:
    if not os.path.exists(path):
        raise ConfigurationError(f"Chain record not found: {path}")
    with np.load(path) as data:
        return ChainRecord(
            betas=data["betas"].tolist(),
            iterations=data["iterations"],
            chain=data["chain"],
            loglik=data["loglik"],
            logprior=data["logprior"],
            snapshot_iterations=data["snapshot_iterations"],
            snapshots=data["snapshots"],
            diagnostics=RunDiagnostics.model_validate_json(str(data["diagnostics"])),
        )
