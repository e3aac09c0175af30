"""
Acquisition and strategic sampling
Expected improvement, UCB, the under-sampling proximity cost and the
periodic remote-jump selector
"""

import logging
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.spatial.distance import cdist
from scipy.stats import norm

from ..data.models import Location
from ..exceptions import ContractError, DimensionError, ExhaustionError, InputError

logger = logging.getLogger(__name__)

DEFAULT_PROXIMITY_SCALE = 4.0
DEFAULT_JUMP_RADIUS = 15.0
REFERENCE_GRID_SIDE = 64

ArrayLike = Union[float, np.ndarray]


class AcquisitionKind(str, Enum):
    """Acquisition function"""

    EI = "ei"
    UCB = "ucb"


class AcquisitionConfig(BaseModel):
    """Acquisition function and strategic-sampling parameters"""

    kind: AcquisitionKind = Field(default=AcquisitionKind.EI)
    xi: float = Field(default=0.01, ge=0.0, description="EI improvement margin")
    beta: float = Field(default=2.0, ge=0.0, description="UCB exploration weight")
    sane: bool = Field(default=False, description="Proximity cost and periodic jumps")
    jump_period: int = Field(default=5, ge=1, description="Jump every m-th step")
    proximity_scale: Optional[float] = Field(
        default=None, gt=0.0, description="tau (px); default 4 scaled by min(H,W)/64"
    )
    jump_radius: Optional[float] = Field(
        default=None, gt=0.0, description="rho (px); default 15 scaled by min(H,W)/64"
    )

    @model_validator(mode="after")
    def check_jump_period(self) -> "AcquisitionConfig":
        if self.sane and self.jump_period < 2:
            raise ValueError("jump_period must be >= 2 when sane is enabled")
        return self

    def resolved(self, height: int, width: int) -> "AcquisitionConfig":
        """Copy with default tau and rho scaled to the grid"""
        factor = min(height, width) / REFERENCE_GRID_SIDE
        return self.model_copy(
            update={
                "proximity_scale": self.proximity_scale or DEFAULT_PROXIMITY_SCALE * factor,
                "jump_radius": self.jump_radius or DEFAULT_JUMP_RADIUS * factor,
            }
        )


def _result(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def expected_improvement(mu: ArrayLike, sigma: ArrayLike, best: float, xi: float = 0.01) -> ArrayLike:
    """E[max(f - best - xi, 0)] under N(mu, sigma²)"""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise InputError("Predictive standard deviation must be >= 0")

    u = mu - best - xi
    positive = sigma > 0
    safe_sigma = np.where(positive, sigma, 1.0)
    z = u / safe_sigma
    ei = np.where(positive, u * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(u, 0.0))
    return _result(np.maximum(ei, 0.0))


def ucb(mu: ArrayLike, sigma: ArrayLike, beta: float = 2.0) -> ArrayLike:
    """mu + beta·sigma"""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise InputError("Predictive standard deviation must be >= 0")
    return _result(np.asarray(mu, dtype=np.float64) + beta * sigma)


def acquisition_values(
    mu: np.ndarray, var: np.ndarray, best: float, cfg: AcquisitionConfig
) -> np.ndarray:
    """Configured acquisition over candidates from predictive moments"""
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=np.float64), 0.0))
    if cfg.kind == AcquisitionKind.UCB:
        return np.atleast_1d(ucb(mu, sigma, cfg.beta))
    return np.atleast_1d(expected_improvement(mu, sigma, best, cfg.xi))


def min_distances(locations: Sequence[Location], measured: Sequence[Location]) -> np.ndarray:
    """Euclidean pixel distance from each location to its nearest measured one"""
    if len(measured) == 0:
        raise ContractError("Proximity needs at least one measured location")
    if len(locations) == 0:
        return np.empty(0, dtype=np.float64)
    return cdist(
        np.asarray(locations, dtype=np.float64).reshape(-1, 2),
        np.asarray(measured, dtype=np.float64).reshape(-1, 2),
    ).min(axis=1)


def proximity_cost(loc: Location, measured: Sequence[Location], tau: float) -> float:
    """exp(-dmin² / 2τ²); 1 on a measured pixel, tending to 0 far away"""
    dmin = float(min_distances([loc], list(measured))[0])
    return float(np.exp(-(dmin**2) / (2.0 * tau**2)))


def _first_max(values: np.ndarray, keys: np.ndarray, pool: np.ndarray) -> int:
    """Index in pool with the largest value; ties go to the smallest key"""
    best = np.max(values[pool])
    tied = pool[values[pool] == best]
    return int(tied[np.argmin(keys[tied])])


def select_index(
    acq: np.ndarray,
    candidates: Sequence[Location],
    measured: Iterable[Location],
    step: int,
    cfg: AcquisitionConfig,
) -> Tuple[int, bool]:
    """
    Pick the next candidate.

    Args:
        acq: Acquisition value per candidate
        candidates: Candidate locations aligned with acq
        measured: Already measured locations
        step: Post-seed step counter t, starting at 1
        cfg: Acquisition configuration (tau and rho resolved)

    Returns:
        (candidate index, whether this was a remote jump)
    """
    acq = np.asarray(acq, dtype=np.float64).ravel()
    if acq.size != len(candidates):
        raise DimensionError(f"{acq.size} acquisition values for {len(candidates)} candidates")
    if np.any(np.isnan(acq)):
        raise InputError("Acquisition values contain NaN")

    measured_list: List[Location] = [(int(r), int(c)) for r, c in measured]
    taken = set(measured_list)
    coords = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    open_idx = np.array(
        [i for i, (r, c) in enumerate(coords) if (int(r), int(c)) not in taken], dtype=np.int64
    )
    if open_idx.size == 0:
        raise ExhaustionError("Every candidate location has already been measured")

    width = int(coords[:, 1].max()) + 1
    keys = coords[:, 0] * width + coords[:, 1]

    if not cfg.sane:
        return _first_max(acq, keys, open_idx), False

    tau = cfg.proximity_scale or DEFAULT_PROXIMITY_SCALE
    rho = cfg.jump_radius or DEFAULT_JUMP_RADIUS
    dmin = np.full(acq.size, np.nan)
    dmin[open_idx] = min_distances([tuple(c) for c in coords[open_idx]], measured_list)

    if step % cfg.jump_period == 0:
        remote = open_idx[dmin[open_idx] >= rho]
        if remote.size:
            return _first_max(acq, keys, remote), True
        logger.warning(f"Step {step}: no candidate {rho:.2f} px from the measured set, skipping jump")

    effective = np.zeros_like(acq)
    cost = np.exp(-(dmin[open_idx] ** 2) / (2.0 * tau**2))
    effective[open_idx] = acq[open_idx] * (1.0 - cost)
    return _first_max(effective, keys, open_idx), False


def select_next(
    acq: np.ndarray,
    candidates: Sequence[Location],
    measured: Iterable[Location],
    step: int,
    cfg: AcquisitionConfig,
) -> Tuple[Location, bool]:
    """Next location to measure and whether it came from a remote jump"""
    index, was_jump = select_index(acq, candidates, measured, step, cfg)
    row, col = candidates[index]
    return (int(row), int(col)), was_jump
