"""
Physical scalarizers
Hysteresis loop area per spectrum and over a whole grid
"""

import logging

import numpy as np

from ..data.models import GridDataset, VoltageWaveform
from ..exceptions import DimensionError

logger = logging.getLogger(__name__)


def _cyclic_area(volts: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Shoelace area along the last axis, closing back to the first vertex"""
    ahead = np.roll(response, -1, axis=-1)
    behind = np.roll(response, 1, axis=-1)
    return 0.5 * np.abs(np.sum(volts * (ahead - behind), axis=-1))


def loop_area(spectrum: np.ndarray, waveform: VoltageWaveform) -> float:
    """
    Absolute area enclosed by the loop {(volts[i], spectrum[i])}.

    Args:
        spectrum: Response samples, one per waveform sample
        waveform: The bias sweep the spectrum was acquired on

    Returns:
        Non-negative area in V·(response units)
    """
    response = np.asarray(spectrum, dtype=np.float64).ravel()
    if response.size != len(waveform):
        raise DimensionError(
            f"Spectrum length {response.size} != waveform length {len(waveform)}"
        )
    return float(_cyclic_area(waveform.volts.astype(np.float64), response))


def scalarize_grid(ds: GridDataset) -> np.ndarray:
    """Loop area at every pixel as an H x W float64 map"""
    volts = ds.waveform.volts.astype(np.float64)
    areas = _cyclic_area(volts, ds.spectra.astype(np.float64))
    logger.debug(
        f"Scalarized {ds.height}x{ds.width} grid: area range "
        f"[{areas.min():.4g}, {areas.max():.4g}]"
    )
    return areas
