"""Result files: CSV and JSON emission and scenario fingerprints."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Union

import numpy as np

if TYPE_CHECKING:
    from .experiments import ExperimentResult

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


def _plain(value: Any) -> Any:
    """Convert numpy scalars and non-finite floats into JSON-safe values."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(_plain(data), sort_keys=True, separators=(",", ":"))


def scenario_hash(document: Mapping[str, Any]) -> str:
    """Short SHA-256 fingerprint of a scenario document (key order does not matter)."""
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()[:16]


def result_records(result: ExperimentResult) -> List[Dict[str, Any]]:
    return [_plain(row) for row in result.sorted_rows()]


def dumps_result(result: ExperimentResult, fmt: str = "csv") -> str:
    """Serialize a result as CSV (header row) or JSON (one object per row)."""
    if fmt == "csv":
        return str(result.to_frame().to_csv(index=False, lineterminator="\n"))
    if fmt == "json":
        return json.dumps(result_records(result), indent=2) + "\n"
    raise ValueError(f"Unknown format {fmt!r}; choose from {list(FORMATS)}")


def write_result(
    result: ExperimentResult, out_dir: Union[str, Path], fmt: str = "csv"
) -> Path:
    """Write ``<out_dir>/<kind>.<fmt>`` and return its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.kind}.{fmt}"
    path.write_text(dumps_result(result, fmt), encoding="utf-8")
    logger.info("Wrote %d rows to %s", len(result.rows), path)
    return path


def write_json(data: Mapping[str, Any], path: Union[str, Path]) -> Path:
    """Write a report mapping as indented JSON."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_plain(data), indent=2) + "\n", encoding="utf-8")
    return p

