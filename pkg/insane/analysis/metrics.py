"""
Quantitative assessment
Normalized mean error, loop variability, the random-sampling baseline and
anomaly hit counts
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..data.models import (
    DEFAULT_PATCH_SIDE,
    DomainClass,
    GridDataset,
    Location,
    MeasuredSet,
    candidate_locations,
    extract_patches,
    spectrum_at,
)
from ..exceptions import (
    DegenerateRangeError,
    DimensionError,
    InsufficientPointsError,
    ParameterError,
)
from .scalarize import loop_area, scalarize_grid
from .surrogate import DKLModel, FitConfig, fit, predict

logger = logging.getLogger(__name__)


@dataclass
class BaselinePoint:
    """Random-sampling variability statistics at one sample count"""

    n_points: int
    mean: float
    std: float


def nme(pred: np.ndarray, truth: np.ndarray) -> float:
    """mean(|pred - truth|) / (max(truth) - min(truth))"""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"Prediction shape {pred.shape} != truth shape {truth.shape}")
    spread = float(np.max(truth) - np.min(truth))
    if not spread > 0:
        raise DegenerateRangeError("Ground truth is constant; NME is undefined")
    return float(np.mean(np.abs(pred - truth)) / spread)


def variability(loops: np.ndarray) -> float:
    """Mean over voltage steps of the population std across loops"""
    loops = np.asarray(loops, dtype=np.float64)
    if loops.ndim != 2:
        raise DimensionError(f"Expected an n x T loop matrix, got shape {loops.shape}")
    if loops.shape[0] < 2:
        raise InsufficientPointsError(f"Variability needs >= 2 loops, got {loops.shape[0]}")
    return float(np.mean(np.std(loops, axis=0)))


def dataset_variability(ds: GridDataset) -> float:
    return variability(ds.flat_spectra())


def eval_nme(
    ds: GridDataset,
    measured: Union[MeasuredSet, Sequence[Location]],
    fit_cfg: Optional[FitConfig] = None,
    patch_side: int = DEFAULT_PATCH_SIDE,
    truth: Optional[np.ndarray] = None,
    init: Optional[DKLModel] = None,
) -> float:
    """
    NME of a loop-area surrogate trained on the measured points.

    A fresh evaluation surrogate learns (patch, loop area) from the measured
    set and predicts loop area over every candidate pixel.

    Args:
        ds: Dataset
        measured: Measured set or list of measured locations (>= 2)
        fit_cfg: Surrogate training schedule
        patch_side: Patch side used for inputs
        truth: Precomputed scalarize_grid(ds), to avoid recomputing per call
        init: Model to warm-start the evaluation surrogate from
    """
    locations = measured.locations if isinstance(measured, MeasuredSet) else list(measured)
    if len(locations) < 2:
        raise InsufficientPointsError(f"eval_nme needs >= 2 measured points, got {len(locations)}")

    truth_map = scalarize_grid(ds) if truth is None else truth
    candidates = candidate_locations(ds, patch_side)
    coords = np.asarray(candidates)
    truth_values = truth_map[coords[:, 0], coords[:, 1]]
    if not float(np.max(truth_values) - np.min(truth_values)) > 0:
        raise DegenerateRangeError("Loop area is constant over the candidates; NME is undefined")

    targets = np.array([loop_area(spectrum_at(ds, loc), ds.waveform) for loc in locations])
    input_range = (float(ds.image.min()), float(ds.image.max()))
    model = fit(
        extract_patches(ds, locations, patch_side),
        targets,
        fit_cfg or FitConfig(),
        input_range=input_range,
        init=init,
    )
    mean, _ = predict(model, extract_patches(ds, candidates, patch_side))
    return nme(mean, truth_values)


def _check_counts(total: int, n_points: int, n_realizations: int) -> None:
    if n_points < 2:
        raise ParameterError(f"n_points must be >= 2, got {n_points}")
    if n_points > total:
        raise ParameterError(f"n_points {n_points} exceeds the {total} pixels of the grid")
    if n_realizations < 2:
        raise ParameterError(f"n_realizations must be >= 2, got {n_realizations}")


def random_baseline(
    ds: GridDataset,
    n_points: int,
    n_realizations: int,
    seed: int = 0,
    threads: int = 1,
) -> Tuple[float, float]:
    """
    Variability of uniformly random pixel samples.

    Realization r draws n_points distinct pixels from default_rng([seed, r]).

    Returns:
        Mean and sample std (ddof=1) of variability across realizations
    """
    spectra = ds.flat_spectra()
    total = spectra.shape[0]
    _check_counts(total, n_points, n_realizations)

    def realization(r: int) -> float:
        rng = np.random.default_rng([seed, r])
        picked = np.sort(rng.choice(total, size=n_points, replace=False))
        return variability(spectra[picked])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        values = np.array(list(pool.map(realization, range(n_realizations))))

    if np.ptp(values) == 0:
        mean, std = float(values[0]), 0.0
    else:
        mean, std = float(np.mean(values)), float(np.std(values, ddof=1))
    logger.info(
        f"Random baseline over {n_realizations} realizations of {n_points} points: "
        f"mean {mean:.6g}, std {std:.6g}"
    )
    return mean, std


def random_baseline_curve(
    ds: GridDataset,
    n_points_list: Iterable[int],
    n_realizations: int,
    seed: int = 0,
    threads: int = 1,
) -> List[BaselinePoint]:
    """random_baseline at several sample counts, sharing the seed"""
    points = []
    for n in n_points_list:
        mean, std = random_baseline(ds, int(n), n_realizations, seed=seed, threads=threads)
        points.append(BaselinePoint(n_points=int(n), mean=mean, std=std))
    return points


def anomaly_hits(locations: Iterable[Location], labels: np.ndarray) -> int:
    """Number of measured locations labelled as anomaly"""
    return sum(
        1 for row, col in locations if int(labels[int(row), int(col)]) == DomainClass.ANOMALY
    )
