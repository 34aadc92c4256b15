from typing import Any, Generic, Optional, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

T = TypeVar("T")


class CommandResult(BaseModel, Generic[T]):
    """Result envelope printed by every subcommand.
    - Canonical boolean is `result`.
    - Accepts `error` as dict or str; coerces str to {"message": str}.
    - Optional `message` field for human-readable info.
    """

    result: bool
    data: Optional[T] = None
    error: Optional[Union[dict[str, Any], str]] = None
    message: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _coerce_error(cls, values: Any):
        if isinstance(values, dict):
            err = values.get("error")
            if err is not None and not isinstance(err, dict):
                values["error"] = {"message": str(err)}
        return values


class ArrayModel(BaseModel):
    """Base for immutable models holding numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def as_float_array(value: Any) -> np.ndarray:
    """Coerce a list or array into a read-only float64 array."""
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr
