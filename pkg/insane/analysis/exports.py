"""
File exports
Trace CSV with its JSON sidecar, and score maps as 16-bit PGM or CSV
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import pandas as pd

from ..data.trace import ExperimentTrace
from ..exceptions import DatasetIOError, ExportError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "step",
    "row",
    "col",
    "mode",
    "target",
    "acq",
    "was_jump",
    "variability",
    "nme",
    "variability_ratio",
]
FLOAT_FORMAT = "%.17g"
PGM_MAXVAL = 65535

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    """trace.csv -> trace.json"""
    return Path(path).with_suffix(".json")


def trace_frame(trace: ExperimentTrace) -> pd.DataFrame:
    """Trace records as a DataFrame in export column order"""
    rows = [
        {
            "step": r.step,
            "row": r.row,
            "col": r.col,
            "mode": r.mode,
            "target": r.target,
            "acq": r.acq,
            "was_jump": "true" if r.was_jump else "false",
            "variability": r.variability,
            "nme": r.nme,
            "variability_ratio": r.variability_ratio,
        }
        for r in trace.records
    ]
    frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    for column in ("target", "acq", "variability", "nme", "variability_ratio"):
        frame[column] = frame[column].astype("float64")
    return frame


def export_trace_csv(trace: ExperimentTrace, path: PathLike) -> None:
    """
    Write the trace CSV and its sidecar JSON.

    Floats use 17 significant digits, missing values are empty, booleans are
    true/false and lines end in LF. No timings are written, so two identical
    runs produce identical bytes.
    """
    target = Path(path)
    sidecar: Dict[str, Any] = {
        "config": trace.config,
        "dataset_hash": trace.dataset_hash,
        "complete": trace.complete,
        "error": trace.error,
        "summary": trace.summary(),
    }
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        trace_frame(trace).to_csv(
            target, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n"
        )
        sidecar_path(target).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise ExportError(f"Could not write trace: {e.strerror or e}", target) from e

    logger.info(f"Wrote {len(trace)} trace records to {target}")


def load_trace(path: PathLike) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Read a trace CSV and, when present, its sidecar"""
    source = Path(path)
    if not source.is_file():
        raise DatasetIOError("Trace not found", source)
    try:
        frame = pd.read_csv(
            source,
            true_values=["true"],
            false_values=["false"],
            dtype={"mode": str},
        )
    except (OSError, ValueError) as e:
        raise DatasetIOError(f"Unreadable trace: {e}", source) from e

    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetIOError(f"Trace lacks columns {missing}", source)

    meta: Dict[str, Any] = {}
    side = sidecar_path(source)
    if side.is_file():
        try:
            meta = json.loads(side.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DatasetIOError(f"Unreadable trace sidecar: {e}", side) from e
    return frame, meta


def _finite_map(values: np.ndarray, path: Path) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ExportError(f"Map must be 2-D, got shape {values.shape}", path)
    if not np.all(np.isfinite(values)):
        raise ExportError("Map contains non-finite values", path)
    return values


def export_map_pgm(values: np.ndarray, path: PathLike) -> None:
    """Binary P5 PGM, maxval 65535, big-endian, min-max scaled (constant map -> 0)"""
    target = Path(path)
    grid = _finite_map(values, target)
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        levels = np.rint((grid - lo) / (hi - lo) * PGM_MAXVAL)
    else:
        levels = np.zeros_like(grid)
    pixels = levels.astype(">u2")
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n{PGM_MAXVAL}\n".encode("ascii")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(header + pixels.tobytes())
    except OSError as e:
        raise ExportError(f"Could not write PGM: {e.strerror or e}", target) from e


def export_map_csv(values: np.ndarray, path: PathLike) -> None:
    """H rows of W comma-separated values with 17 significant digits"""
    target = Path(path)
    grid = _finite_map(values, target)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(target, grid, fmt=FLOAT_FORMAT, delimiter=",", newline="\n")
    except OSError as e:
        raise ExportError(f"Could not write map CSV: {e.strerror or e}", target) from e
