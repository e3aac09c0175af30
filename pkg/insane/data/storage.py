"""
On-disk dataset format
A directory with manifest.json and raw little-endian array files
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..exceptions import (
    DatasetIOError,
    DatasetNotFoundError,
    DatasetSizeError,
    ManifestError,
    NonFiniteDataError,
)
from .models import GridDataset, VoltageWaveform

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

ARRAY_FILES = {
    "image": "image.f32",
    "spectra": "spectra.f32",
    "voltage": "voltage.f32",
}
LABELS_FILE = "labels.u8"

PathLike = Union[str, Path]


def save_dataset(ds: GridDataset, path: PathLike) -> None:
    """
    Write a dataset directory.

    Args:
        ds: Dataset to persist
        path: Target directory (created if missing)
    """
    root = Path(path)
    arrays: Dict[str, str] = dict(ARRAY_FILES)
    if ds.labels is not None:
        arrays["labels"] = LABELS_FILE

    manifest = {
        "version": FORMAT_VERSION,
        "height": ds.height,
        "width": ds.width,
        "spectrum_len": ds.spectrum_len,
        "cyclic": bool(ds.waveform.cyclic),
        "arrays": arrays,
    }

    try:
        root.mkdir(parents=True, exist_ok=True)
        ds.image.astype("<f4").tofile(root / arrays["image"])
        ds.spectra.astype("<f4").tofile(root / arrays["spectra"])
        ds.waveform.volts.astype("<f4").tofile(root / arrays["voltage"])
        if ds.labels is not None:
            ds.labels.astype(np.uint8).tofile(root / arrays["labels"])
        (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as e:
        raise DatasetIOError(f"Could not write dataset: {e.strerror or e}", root) from e

    logger.info(
        f"Saved {ds.height}x{ds.width}x{ds.spectrum_len} dataset to {root}"
    )


def _read_manifest(root: Path) -> Dict[str, Any]:
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetNotFoundError("Manifest not found", manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Unreadable manifest: {e}", manifest_path) from e

    if not isinstance(manifest, dict):
        raise ManifestError("Manifest must be a JSON object", manifest_path)
    version = manifest.get("version")
    if version != FORMAT_VERSION:
        raise ManifestError(f"Unsupported manifest version {version!r}", manifest_path)

    for key in ("height", "width", "spectrum_len", "arrays"):
        if key not in manifest:
            raise ManifestError(f"Manifest missing field '{key}'", manifest_path)
    for key in ("height", "width", "spectrum_len"):
        value = manifest[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ManifestError(f"Manifest field '{key}' must be an integer, got {value!r}", manifest_path)
    if "cyclic" in manifest and not isinstance(manifest["cyclic"], bool):
        raise ManifestError(f"Manifest field 'cyclic' must be a boolean, got {manifest['cyclic']!r}", manifest_path)

    arrays = manifest["arrays"]
    if not isinstance(arrays, dict):
        raise ManifestError("Manifest 'arrays' must be an object", manifest_path)
    for key in ARRAY_FILES:
        if key not in arrays:
            raise ManifestError(f"Manifest lists no '{key}' array", manifest_path)
    for key, name in arrays.items():
        if not isinstance(name, str) or not name:
            raise ManifestError(f"Manifest array '{key}' must name a file, got {name!r}", manifest_path)
    return manifest


def _read_array(path: Path, dtype: str, count: int) -> np.ndarray:
    if not path.is_file():
        raise DatasetNotFoundError("Array file not found", path)
    itemsize = np.dtype(dtype).itemsize
    expected = count * itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise DatasetSizeError(path, expected, actual)
    try:
        data = np.fromfile(path, dtype=dtype, count=count)
    except OSError as e:
        raise DatasetIOError(f"Could not read array: {e}", path) from e
    if data.dtype.kind == "f" and not np.all(np.isfinite(data)):
        raise NonFiniteDataError("Array contains non-finite values", path)
    return data


def load_dataset(path: PathLike) -> GridDataset:
    """
    Read a dataset directory written by save_dataset.

    Returns:
        GridDataset with float32 arrays identical to the stored bytes
    """
    root = Path(path)
    manifest = _read_manifest(root)
    height = manifest["height"]
    width = manifest["width"]
    length = manifest["spectrum_len"]
    arrays = manifest["arrays"]

    if height < 1 or width < 1 or length < 4:
        raise ManifestError(
            f"Invalid dimensions {height}x{width}x{length}", root / MANIFEST_NAME
        )

    image = _read_array(root / arrays["image"], "<f4", height * width)
    spectra = _read_array(root / arrays["spectra"], "<f4", height * width * length)
    volts = _read_array(root / arrays["voltage"], "<f4", length)
    labels = None
    if "labels" in arrays:
        labels = _read_array(root / arrays["labels"], "u1", height * width).reshape(
            height, width
        )

    ds = GridDataset(
        image=image.reshape(height, width),
        spectra=spectra.reshape(height, width, length),
        waveform=VoltageWaveform(volts=volts, cyclic=bool(manifest.get("cyclic", True))),
        labels=labels,
    )
    logger.info(f"Loaded {height}x{width}x{length} dataset from {root}")
    return ds
