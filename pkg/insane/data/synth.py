"""
Synthetic ferroelectric datasets
Seeded domain layouts with class-dependent hysteresis loops, low-SNR
in-plane regions, domain walls and planted anomaly disks
"""

import logging
from enum import Enum
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..exceptions import ConfigError, ParameterError
from .models import DomainClass, GridDataset, VoltageWaveform

logger = logging.getLogger(__name__)


class LayoutKind(str, Enum):
    """Domain layout generator"""

    STRIPE = "stripe"
    VORONOI = "voronoi"


STRIPE_SEQUENCE = (DomainClass.UP, DomainClass.IN_PLANE, DomainClass.DOWN, DomainClass.IN_PLANE)
DOMAIN_CLASSES = (DomainClass.UP, DomainClass.DOWN, DomainClass.IN_PLANE)


class LoopParams(BaseModel):
    """Parametric hysteresis loop: A·tanh((V ∓ Vc)/w) + b + noise"""

    amplitude: float = Field(default=1.0, description="Loop amplitude A (arb.)")
    coercive_voltage: float = Field(default=1.0, description="Coercive voltage Vc (V)")
    width: float = Field(default=0.25, description="Switching width w (V), must be > 0")
    offset: float = Field(default=0.0, description="Vertical offset b (arb.)")
    noise: float = Field(default=0.02, description="Gaussian noise sigma (arb.), >= 0")
    split: float = Field(
        default=0.0,
        ge=0.0,
        description="If > 0, two half-amplitude switching events at Vc ± split (V)",
    )


class ClassLoops(BaseModel):
    """Loop parameters for the four regular classes"""

    up: LoopParams = Field(default_factory=lambda: LoopParams(amplitude=1.0))
    down: LoopParams = Field(default_factory=lambda: LoopParams(amplitude=-1.0))
    in_plane: LoopParams = Field(default_factory=lambda: LoopParams(amplitude=0.1))
    wall: LoopParams = Field(
        default_factory=lambda: LoopParams(amplitude=0.5, coercive_voltage=0.5)
    )

    def for_class(self, cls: DomainClass) -> LoopParams:
        return {
            DomainClass.UP: self.up,
            DomainClass.DOWN: self.down,
            DomainClass.IN_PLANE: self.in_plane,
            DomainClass.WALL: self.wall,
        }[cls]


class LayoutConfig(BaseModel):
    """Domain layout and its own seed"""

    kind: LayoutKind = LayoutKind.VORONOI
    n_domains: int = Field(default=8, ge=1, description="Stripes or Voronoi cells")
    seed: int = Field(default=7, description="Seed for layout and anomaly placement")


class AnomalyConfig(BaseModel):
    """Planted anomaly disks"""

    count: int = Field(default=1, ge=0)
    radius: int = Field(default=2, ge=0, description="Disk radius (px)")
    edge_margin: int = Field(
        default=8, ge=0, description="Minimum distance from disk to image edge (px)"
    )
    loop: LoopParams = Field(
        default_factory=lambda: LoopParams(
            amplitude=0.8, coercive_voltage=1.2, width=0.15, split=0.9, offset=-1.2
        )
    )


class SynthConfig(BaseModel):
    """
    Full description of a synthetic dataset.

    Serialised as JSON for the `generate` subcommand; every field has a
    default, so `{}` is a valid config.
    """

    height: int = Field(default=64, ge=1)
    width: int = Field(default=64, ge=1)
    spectrum_len: int = Field(default=64, ge=4)
    v_max: float = Field(default=3.0, gt=0.0, description="Sweep amplitude (V)")
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    classes: ClassLoops = Field(default_factory=ClassLoops)
    anomaly: AnomalyConfig = Field(default_factory=AnomalyConfig)
    read_index: Optional[int] = Field(
        default=None,
        ge=0,
        description="Spectrum sample copied into the image; default is the "
        "descending-branch sample closest to 0 V",
    )
    seed: int = Field(default=0, description="Master noise seed")

    def waveform(self) -> VoltageWaveform:
        return VoltageWaveform.triangular(v_max=self.v_max, length=self.spectrum_len)

    def expected_anomaly_fraction(self) -> float:
        """Anomaly pixel fraction assuming disks do not overlap"""
        return self.anomaly.count * disk_pixel_count(self.anomaly.radius) / (
            self.height * self.width
        )


def disk_pixel_count(radius: int) -> int:
    """Pixels (dr, dc) with dr² + dc² <= radius²"""
    offsets = np.arange(-radius, radius + 1)
    return int(np.sum(offsets[:, None] ** 2 + offsets[None, :] ** 2 <= radius**2))


def loop_model(
    p: LoopParams, waveform: VoltageWaveform, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """
    Evaluate a hysteresis loop on the waveform.

    Ascending samples follow A·tanh((V - Vc)/w) + b, descending samples
    A·tanh((V + Vc)/w) + b. Noise is added when p.noise > 0, which then
    requires an rng.
    """
    if p.width <= 0:
        raise ParameterError(f"Loop width must be > 0, got {p.width}")
    if p.noise < 0:
        raise ParameterError(f"Loop noise must be >= 0, got {p.noise}")

    volts = waveform.volts.astype(np.float64)
    direction = np.where(waveform.ascending_mask(), -1.0, 1.0)

    if p.split > 0:
        outer = np.tanh((volts + direction * (p.coercive_voltage + p.split)) / p.width)
        inner = np.tanh((volts + direction * (p.coercive_voltage - p.split)) / p.width)
        response = 0.5 * p.amplitude * (outer + inner) + p.offset
    else:
        response = p.amplitude * np.tanh((volts + direction * p.coercive_voltage) / p.width) + p.offset

    if p.noise > 0:
        if rng is None:
            raise ParameterError("A noisy loop needs a random generator")
        response = response + rng.normal(0.0, p.noise, size=volts.size)
    return response


def _domain_map(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    height, width = cfg.height, cfg.width
    n = cfg.layout.n_domains

    if cfg.layout.kind == LayoutKind.STRIPE:
        stripe = (np.arange(width) * n) // width
        classes = np.array([STRIPE_SEQUENCE[i % len(STRIPE_SEQUENCE)] for i in range(n)])
        return np.broadcast_to(classes[stripe][None, :], (height, width)).copy()

    seeds = np.column_stack(
        [rng.uniform(0, height, size=n), rng.uniform(0, width, size=n)]
    )
    # every class owns a cell once n >= 3
    seed_classes = rng.permutation(np.resize(np.array(DOMAIN_CLASSES), n))
    rows, cols = np.mgrid[0:height, 0:width]
    pixels = np.column_stack([rows.ravel(), cols.ravel()]).astype(np.float64)
    sq_dist = ((pixels[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(sq_dist, axis=1)
    return seed_classes[nearest].reshape(height, width)


def _wall_mask(domains: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighbourhood (including itself) holds >= 2 classes"""
    wall = np.zeros(domains.shape, dtype=bool)
    vertical = domains[1:, :] != domains[:-1, :]
    horizontal = domains[:, 1:] != domains[:, :-1]
    wall[1:, :] |= vertical
    wall[:-1, :] |= vertical
    wall[:, 1:] |= horizontal
    wall[:, :-1] |= horizontal
    return wall


def _plant_anomalies(
    cfg: SynthConfig, labels: np.ndarray, rng: np.random.Generator
) -> None:
    anomaly = cfg.anomaly
    if anomaly.count == 0:
        return

    reach = anomaly.radius + anomaly.edge_margin
    if 2 * reach + 1 > min(cfg.height, cfg.width):
        raise ConfigError(
            f"Anomaly disk of radius {anomaly.radius} with edge margin {anomaly.edge_margin} "
            f"does not fit a {cfg.height}x{cfg.width} grid"
        )

    rows, cols = np.mgrid[0 : cfg.height, 0 : cfg.width]
    for _ in range(anomaly.count):
        r0 = int(rng.integers(reach, cfg.height - reach))
        c0 = int(rng.integers(reach, cfg.width - reach))
        disk = (rows - r0) ** 2 + (cols - c0) ** 2 <= anomaly.radius**2
        labels[disk] = DomainClass.ANOMALY


def generate_labels(cfg: SynthConfig) -> np.ndarray:
    """Ground-truth class map; depends only on the layout seed"""
    rng = np.random.default_rng(cfg.layout.seed)
    domains = _domain_map(cfg, rng)
    labels = domains.astype(np.uint8)
    labels[_wall_mask(domains)] = DomainClass.WALL
    _plant_anomalies(cfg, labels, rng)
    return labels


def default_read_index(waveform: VoltageWaveform) -> int:
    volts = waveform.volts.astype(np.float64)
    descending = np.flatnonzero(~waveform.ascending_mask())
    if descending.size == 0:
        return int(np.argmin(np.abs(volts)))
    return int(descending[np.argmin(np.abs(volts[descending]))])


def generate(cfg: SynthConfig, seed: Optional[int] = None) -> GridDataset:
    """
    Build a synthetic dataset.

    Args:
        cfg: Dataset description
        seed: Noise seed; defaults to cfg.seed

    Returns:
        GridDataset whose image is the spectra sampled at the read index
    """
    seed = cfg.seed if seed is None else int(seed)
    waveform = cfg.waveform()
    read_index = default_read_index(waveform) if cfg.read_index is None else cfg.read_index
    if read_index >= cfg.spectrum_len:
        raise ConfigError(
            f"read_index {read_index} outside spectrum of length {cfg.spectrum_len}"
        )

    labels = generate_labels(cfg)

    class_params: Dict[int, LoopParams] = {
        int(cls): cfg.classes.for_class(cls)
        for cls in (DomainClass.UP, DomainClass.DOWN, DomainClass.IN_PLANE, DomainClass.WALL)
    }
    class_params[int(DomainClass.ANOMALY)] = cfg.anomaly.loop
    clean = {cls: loop_model(p.model_copy(update={"noise": 0.0}), waveform) for cls, p in class_params.items()}

    spectra = np.empty((cfg.height, cfg.width, cfg.spectrum_len), dtype=np.float64)
    for row in range(cfg.height):
        for col in range(cfg.width):
            cls = int(labels[row, col])
            spectra[row, col] = clean[cls]
            sigma = class_params[cls].noise
            if sigma > 0:
                pixel_rng = np.random.default_rng([seed, row, col])
                spectra[row, col] += pixel_rng.normal(0.0, sigma, size=cfg.spectrum_len)

    spectra32 = spectra.astype(np.float32)
    ds = GridDataset(
        image=spectra32[:, :, read_index],
        spectra=spectra32,
        waveform=waveform,
        labels=labels,
    )

    anomaly_fraction = float(np.mean(labels == DomainClass.ANOMALY))
    logger.info(
        f"Generated {cfg.height}x{cfg.width}x{cfg.spectrum_len} dataset "
        f"({cfg.layout.kind.value} layout, seed {seed}, "
        f"anomaly fraction {anomaly_fraction:.4f})"
    )
    return ds
