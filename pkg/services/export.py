import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel

from config import Config

logger = logging.getLogger(__name__)


def to_json(obj: Any) -> str:
    """Recursively convert pydantic models, numpy arrays, lists and dicts into a stable JSON string."""
    return json.dumps(_to_dict_recursive(obj), indent=2, sort_keys=True)


def _to_dict_recursive(obj: Any):
    if isinstance(obj, BaseModel):
        return {k: _to_dict_recursive(v) for k, v in obj.model_dump().items()}
    elif isinstance(obj, np.ndarray):
        return [_to_dict_recursive(o) for o in obj.tolist()]
    elif isinstance(obj, (list, tuple)):
        return [_to_dict_recursive(o) for o in obj]
    elif isinstance(obj, dict):
        return {str(k): _to_dict_recursive(v) for k, v in obj.items()}
    elif isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    elif isinstance(obj, (np.integer, int)):
        return int(obj)
    elif isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    elif hasattr(obj, "value"):
        return obj.value
    return obj


def format_float(value: float, digits: int = Config.CSV_DIGITS) -> str:
    return f"{float(value):.{digits}g}"


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug(f"Wrote {path}")
    return path


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(obj) + "\n")
    logger.debug(f"Wrote {path}")
    return path


def control_rows(grid: np.ndarray, values: np.ndarray) -> List[List[float]]:
    return [[float(t), float(f)] for t, f in zip(grid, values)]


def psi_rows(grid: np.ndarray, mantissa: np.ndarray, log_scale: float) -> List[List[float]]:
    return [[float(t), float(m), float(log_scale)] for t, m in zip(grid, mantissa)]
