"""
In-memory model of image-spectrum grid datasets
Voltage waveforms, grid datasets, image patches and the measured set
"""

import hashlib
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..exceptions import (
    BoundsError,
    ContractError,
    DimensionError,
    EmptyCandidatesError,
    InputError,
    MarginError,
    ParameterError,
)

logger = logging.getLogger(__name__)

Location = Tuple[int, int]

DEFAULT_PATCH_SIDE = 17


class DomainClass(IntEnum):
    """Ground-truth class ids stored in the labels array"""

    UP = 0
    DOWN = 1
    IN_PLANE = 2
    WALL = 3
    ANOMALY = 4


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class VoltageWaveform:
    """Bias sweep shared by every spectrum of a dataset"""

    volts: np.ndarray
    cyclic: bool = True

    def __post_init__(self):
        volts = np.array(self.volts, dtype=np.float32).ravel()
        if volts.size < 4:
            raise ParameterError(f"Waveform needs at least 4 samples, got {volts.size}")
        if not np.all(np.isfinite(volts)):
            raise InputError("Waveform contains non-finite voltages")
        object.__setattr__(self, "volts", _frozen(volts))

    @classmethod
    def triangular(cls, v_max: float = 3.0, length: int = 64) -> "VoltageWaveform":
        """Single closed cycle -v_max -> +v_max -> -v_max (start point not repeated)"""
        phase = np.arange(length, dtype=np.float64) / length
        return cls(volts=v_max * (1.0 - 4.0 * np.abs(phase - 0.5)), cyclic=True)

    def __len__(self) -> int:
        return int(self.volts.size)

    def ascending_mask(self) -> np.ndarray:
        """True where a sample belongs to the ascending branch"""
        volts = self.volts.astype(np.float64)
        mask = np.empty(volts.size, dtype=bool)
        mask[1:] = volts[1:] > volts[:-1]
        mask[0] = mask[1]
        return mask


@dataclass(frozen=True, eq=False)
class GridDataset:
    """
    H x W structure image with one spectrum per pixel.

    Arrays are held at float32 precision so that a save/load round trip is
    bit-exact; callers cast to float64 for arithmetic.
    """

    image: np.ndarray
    spectra: np.ndarray
    waveform: VoltageWaveform
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        image = np.array(self.image, dtype=np.float32)
        spectra = np.array(self.spectra, dtype=np.float32)

        if image.ndim != 2:
            raise DimensionError(f"Image must be 2-D, got shape {image.shape}")
        if spectra.ndim != 3 or spectra.shape[:2] != image.shape:
            raise DimensionError(
                f"Spectra shape {spectra.shape} does not match image {image.shape}"
            )
        if spectra.shape[2] != len(self.waveform):
            raise DimensionError(
                f"Spectrum length {spectra.shape[2]} != waveform length {len(self.waveform)}"
            )
        if image.size < 1:
            raise DimensionError("Dataset must contain at least one pixel")
        if not (np.all(np.isfinite(image)) and np.all(np.isfinite(spectra))):
            raise InputError("Dataset contains non-finite values")

        object.__setattr__(self, "image", _frozen(image))
        object.__setattr__(self, "spectra", _frozen(spectra))

        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.uint8)
            if labels.shape != image.shape:
                raise DimensionError(
                    f"Labels shape {labels.shape} does not match image {image.shape}"
                )
            object.__setattr__(self, "labels", _frozen(labels))

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    @property
    def spectrum_len(self) -> int:
        return int(self.spectra.shape[2])

    def flat_spectra(self) -> np.ndarray:
        """All spectra as an (H*W) x T float64 matrix, row-major"""
        return self.spectra.reshape(-1, self.spectrum_len).astype(np.float64)

    def content_hash(self) -> str:
        """SHA-256 over dimensions and raw array bytes"""
        digest = hashlib.sha256()
        digest.update(
            f"{self.height}x{self.width}x{self.spectrum_len}:{int(self.waveform.cyclic)}".encode()
        )
        digest.update(self.image.astype("<f4").tobytes())
        digest.update(self.spectra.astype("<f4").tobytes())
        digest.update(self.waveform.volts.astype("<f4").tobytes())
        if self.labels is not None:
            digest.update(self.labels.tobytes())
        return digest.hexdigest()

    def label_histogram(self) -> Dict[str, int]:
        """Pixel count per ground-truth class (empty without labels)"""
        if self.labels is None:
            return {}
        counts = np.bincount(self.labels.ravel(), minlength=len(DomainClass))
        return {cls.name.lower(): int(counts[cls]) for cls in DomainClass}


@dataclass(frozen=True, eq=False)
class Patch:
    """Odd-sided window of image values centred on a pixel"""

    center: Location
    side: int
    values: np.ndarray

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _check_side(side: int) -> None:
    if side < 3 or side % 2 == 0:
        raise ParameterError(f"Patch side must be odd and >= 3, got {side}")


def extract_patch(ds: GridDataset, loc: Location, side: int = DEFAULT_PATCH_SIDE) -> Patch:
    """Patch of image values centred at loc"""
    _check_side(side)
    row, col = int(loc[0]), int(loc[1])
    margin = (side - 1) // 2
    if not (
        margin <= row < ds.height - margin and margin <= col < ds.width - margin
    ):
        raise MarginError((row, col), side)

    values = ds.image[row - margin : row + margin + 1, col - margin : col + margin + 1]
    return Patch(center=(row, col), side=side, values=values.astype(np.float64))


def extract_patches(
    ds: GridDataset, locs: List[Location], side: int = DEFAULT_PATCH_SIDE
) -> np.ndarray:
    """Flattened patches for many locations as an n x side² float64 matrix"""
    _check_side(side)
    margin = (side - 1) // 2
    if not locs:
        return np.empty((0, side * side), dtype=np.float64)

    coords = np.asarray(locs, dtype=np.int64).reshape(-1, 2)
    rows, cols = coords[:, 0], coords[:, 1]
    outside = (
        (rows < margin)
        | (rows >= ds.height - margin)
        | (cols < margin)
        | (cols >= ds.width - margin)
    )
    if np.any(outside):
        bad = int(np.argmax(outside))
        raise MarginError((int(rows[bad]), int(cols[bad])), side)

    windows = np.lib.stride_tricks.sliding_window_view(ds.image, (side, side))
    patches = windows[rows - margin, cols - margin]
    return patches.reshape(len(coords), side * side).astype(np.float64)


def candidate_locations(ds: GridDataset, side: int = DEFAULT_PATCH_SIDE) -> List[Location]:
    """Every pixel whose patch fits inside the image, in row-major order"""
    _check_side(side)
    if ds.height < side or ds.width < side:
        raise EmptyCandidatesError(
            f"Grid {ds.height}x{ds.width} is smaller than patch side {side}"
        )
    margin = (side - 1) // 2
    return [
        (row, col)
        for row in range(margin, ds.height - margin)
        for col in range(margin, ds.width - margin)
    ]


def spectrum_at(ds: GridDataset, loc: Location) -> np.ndarray:
    """Replay the stored spectrum at loc (a float64 copy)"""
    row, col = int(loc[0]), int(loc[1])
    if not (0 <= row < ds.height and 0 <= col < ds.width):
        raise BoundsError(
            f"Location {(row, col)} outside grid {ds.height}x{ds.width}"
        )
    return ds.spectra[row, col].astype(np.float64)


@dataclass
class MeasuredSet:
    """Ordered record of measured locations and their spectra"""

    _locations: List[Location] = field(default_factory=list)
    _spectra: List[np.ndarray] = field(default_factory=list)
    _index: Dict[Location, int] = field(default_factory=dict)

    def add(self, loc: Location, spectrum: np.ndarray) -> int:
        """Append a measurement; returns its position"""
        key = (int(loc[0]), int(loc[1]))
        if key in self._index:
            raise ContractError(f"Location {key} has already been measured")
        self._index[key] = len(self._locations)
        self._locations.append(key)
        self._spectra.append(np.array(spectrum, dtype=np.float64, copy=True))
        return self._index[key]

    def __len__(self) -> int:
        return len(self._locations)

    def __contains__(self, loc) -> bool:
        return (int(loc[0]), int(loc[1])) in self._index

    def __iter__(self) -> Iterator[Tuple[Location, np.ndarray]]:
        return iter(zip(self._locations, self._spectra))

    def position(self, loc: Location) -> int:
        return self._index[(int(loc[0]), int(loc[1]))]

    @property
    def locations(self) -> List[Location]:
        return list(self._locations)

    def spectra(self) -> np.ndarray:
        """n x T matrix of measured spectra in insertion order"""
        if not self._spectra:
            return np.empty((0, 0), dtype=np.float64)
        return np.vstack(self._spectra)
