"""
Autonomous experiment engine
Seeding, per-step targets, surrogate fit, acquisition, measurement and
trace recording for one realization
"""

import logging
import time
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from ..analysis.metrics import eval_nme, variability
from ..analysis.novelty import NoveltyConfig, NoveltyMethod, score
from ..analysis.scalarize import loop_area, scalarize_grid
from ..analysis.surrogate import DKLModel, FitConfig, fit, predict_with_diagnostics
from ..data.models import (
    DEFAULT_PATCH_SIDE,
    GridDataset,
    Location,
    MeasuredSet,
    VoltageWaveform,
    candidate_locations,
    extract_patches,
    spectrum_at,
)
from ..data.trace import ExperimentTrace, TraceRecord
from ..exceptions import (
    ConfigError,
    ExperimentAbortedError,
    InsufficientPointsError,
    NumericalError,
)
from .acquisition import AcquisitionConfig, acquisition_values, select_index

logger = logging.getLogger(__name__)


class ExperimentMode(str, Enum):
    """What the surrogate is trained on and how points are selected"""

    SCALARIZER = "scalarizer"
    NOVELTY = "novelty"
    INSANE = "insane"


class RunConfig(BaseModel):
    """
    Everything that determines a realization besides the dataset.

    Insane mode switches on strategic sampling unless the acquisition config
    explicitly disables it, which is rejected.
    """

    mode: ExperimentMode = Field(default=ExperimentMode.NOVELTY)
    novelty: Optional[NoveltyConfig] = Field(
        default=None, description="Scorer for novelty and insane modes"
    )
    n_init: int = Field(default=10, ge=2, description="Random seed measurements")
    n_steps: int = Field(default=200, ge=1, description="Acquisitions after seeding")
    seed: int = Field(default=0, description="Master seed")
    patch_side: int = Field(default=DEFAULT_PATCH_SIDE, description="Odd patch side >= 3")
    fit: FitConfig = Field(default_factory=FitConfig)
    acquisition: AcquisitionConfig = Field(default_factory=AcquisitionConfig)
    eval_every: int = Field(default=10, ge=1, description="Steps between NME evaluations")
    evaluate_nme: bool = Field(default=True, description="Record NME at the eval cadence")
    recompute_novelty: bool = Field(
        default=True, description="Rescore every measured loop each step (else freeze)"
    )

    @field_validator("patch_side")
    @classmethod
    def check_patch_side(cls, v: int) -> int:
        if v < 3 or v % 2 == 0:
            raise ValueError(f"patch_side must be odd and >= 3, got {v}")
        return v

    @model_validator(mode="after")
    def check_mode(self) -> "RunConfig":
        if self.mode == ExperimentMode.SCALARIZER:
            if self.novelty is not None:
                raise ValueError("novelty settings are not used in scalarizer mode")
            return self

        if self.novelty is None:
            self.novelty = NoveltyConfig()
        if self.mode == ExperimentMode.INSANE:
            if "sane" in self.acquisition.model_fields_set and not self.acquisition.sane:
                raise ValueError("insane mode requires acquisition.sane = true")
            if self.acquisition.jump_period < 2:
                raise ValueError("jump_period must be >= 2 when sane is enabled")
            self.acquisition = self.acquisition.model_copy(update={"sane": True})
        return self


def _population_config(cfg: NoveltyConfig, n: int) -> Optional[NoveltyConfig]:
    """Adapt a scorer to a small population; None means not scorable yet"""
    if cfg.method in (NoveltyMethod.NN, NoveltyMethod.LOF) and n <= cfg.k:
        if n < 2:
            return None
        logger.warning(f"{cfg.method.value}: only {n} loops, clamping k from {cfg.k} to {n - 1}")
        return cfg.model_copy(update={"k": n - 1})
    if cfg.method in (NoveltyMethod.IF, NoveltyMethod.OCSVM) and n < 2:
        return None
    if cfg.method == NoveltyMethod.IF and cfg.subsample is not None and cfg.subsample > n:
        logger.warning(f"if: only {n} loops, clamping subsample from {cfg.subsample} to {n}")
        return cfg.model_copy(update={"subsample": n})
    return cfg


def compute_targets(
    loops,
    mode: ExperimentMode,
    novelty_cfg: Optional[NoveltyConfig],
    waveform: VoltageWaveform,
    threads: int = 1,
) -> np.ndarray:
    """
    Fitting targets for the measured loops.

    Scalarizer mode uses loop areas; the novelty modes score the loops as one
    population, falling back to zeros while the population is too small.
    """
    loops = np.asarray(loops, dtype=np.float64)
    if loops.ndim != 2 or loops.shape[0] == 0:
        raise InsufficientPointsError("Targets need at least one measured loop")
    n = loops.shape[0]

    if mode == ExperimentMode.SCALARIZER:
        return np.array([loop_area(loop, waveform) for loop in loops])

    if novelty_cfg is None:
        raise ConfigError(f"Mode {mode.value} needs a novelty configuration")
    cfg = _population_config(novelty_cfg, n)
    if cfg is None:
        logger.warning(f"{novelty_cfg.method.value}: {n} loop(s) cannot be scored yet, using zeros")
        return np.zeros(n)
    return score(loops, cfg, threads=threads)


class ExperimentEngine:
    """
    Runs one autonomous-experiment realization over a pre-acquired dataset.

    The engine owns a single RNG stream seeded from the master seed; the
    surrogate's network initialisation uses a spawned child stream.
    """

    def __init__(self, ds: GridDataset, cfg: RunConfig, threads: int = 1):
        self.ds = ds
        self.cfg = cfg
        self.threads = max(1, int(threads))

        self.candidates: List[Location] = candidate_locations(ds, cfg.patch_side)
        needed = cfg.n_init + cfg.n_steps
        if needed > len(self.candidates):
            raise ConfigError(
                f"n_init + n_steps = {needed} exceeds the {len(self.candidates)} candidate locations"
            )

        selection_seq, network_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.rng = np.random.default_rng(selection_seq)
        self.fit_cfg = cfg.fit.model_copy(
            update={"seed": int(network_seq.generate_state(1)[0])}
        )
        self.acq_cfg = cfg.acquisition.resolved(ds.height, ds.width)

        self.candidate_patches = extract_patches(ds, self.candidates, cfg.patch_side)
        self.candidate_index = {loc: i for i, loc in enumerate(self.candidates)}
        self.input_range = (float(ds.image.min()), float(ds.image.max()))

        self.truth = scalarize_grid(ds)
        self.nme_enabled = cfg.evaluate_nme and self._truth_has_range()

        self.measured = MeasuredSet()
        self.targets = np.empty(0)
        self.model: Optional[DKLModel] = None
        self.base_variability: Optional[float] = None
        self.trace = ExperimentTrace(
            config=cfg.model_dump(mode="json"), dataset_hash=ds.content_hash()
        )

    def _truth_has_range(self) -> bool:
        coords = np.asarray(self.candidates)
        values = self.truth[coords[:, 0], coords[:, 1]]
        if float(values.max() - values.min()) > 0:
            return True
        logger.warning("Loop area is constant over the candidates; NME will not be recorded")
        return False

    def run(self) -> ExperimentTrace:
        """Seed, then acquire n_steps points; aborts keep the partial trace"""
        logger.info(
            f"Starting {self.cfg.mode.value} run: {self.cfg.n_init} seeds + "
            f"{self.cfg.n_steps} steps over {len(self.candidates)} candidates "
            f"(seed {self.cfg.seed})"
        )
        try:
            self._seed_phase()
            for step in range(1, self.cfg.n_steps + 1):
                self._acquire(step)
        except NumericalError as e:
            logger.error(f"Run aborted after {len(self.trace)} records: {e}", exc_info=True)
            self.trace.complete = False
            self.trace.error = str(e)
            raise ExperimentAbortedError(
                f"Run aborted after {len(self.trace)} records: {e}", self.trace
            ) from e

        summary = self.trace.summary()
        logger.info(
            f"Run complete: {summary['records']} records, {summary['jump_count']} jumps, "
            f"final variability {summary['final_variability']}, final NME {summary['final_nme']}"
        )
        return self.trace

    def _measure(self, loc: Location) -> None:
        self.measured.add(loc, spectrum_at(self.ds, loc))

    def _refresh_targets(self) -> None:
        """Targets for every measured loop after a new measurement"""
        spectra = self.measured.spectra()
        mode = self.cfg.mode
        n_known = self.targets.size
        if mode == ExperimentMode.SCALARIZER:
            fresh = compute_targets(spectra[n_known:], mode, None, self.ds.waveform)
            self.targets = np.concatenate([self.targets, fresh])
            return

        scores = compute_targets(spectra, mode, self.cfg.novelty, self.ds.waveform, self.threads)
        if self.cfg.recompute_novelty:
            self.targets = scores
        else:
            self.targets = np.concatenate([self.targets, scores[n_known:]])

    def _variability(self) -> Optional[float]:
        if len(self.measured) < 2:
            return None
        return variability(self.measured.spectra())

    def _nme(self) -> Optional[float]:
        if not self.nme_enabled:
            return None
        return eval_nme(
            self.ds,
            self.measured,
            self.fit_cfg,
            patch_side=self.cfg.patch_side,
            truth=self.truth,
        )

    def _record(
        self, loc: Location, target: float, acq: float, was_jump: bool, evaluate: bool, started: float
    ) -> None:
        spread = self._variability()
        ratio = None
        if spread is not None and self.base_variability:
            ratio = spread / self.base_variability
        self.trace.records.append(
            TraceRecord(
                step=len(self.trace),
                row=loc[0],
                col=loc[1],
                mode=self.cfg.mode.value,
                target=float(target),
                acq=float(acq),
                was_jump=was_jump,
                variability=spread,
                nme=self._nme() if evaluate else None,
                variability_ratio=ratio,
                wall_ms=(time.perf_counter() - started) * 1000.0,
            )
        )

    def _seed_phase(self) -> None:
        started = time.perf_counter()
        picks = self.rng.choice(len(self.candidates), size=self.cfg.n_init, replace=False)
        seeds = [self.candidates[int(i)] for i in picks]
        for loc in seeds:
            self._measure(loc)
        self._refresh_targets()
        self.base_variability = self._variability()

        for position, loc in enumerate(seeds):
            last = position == len(seeds) - 1
            spread = variability(self.measured.spectra()[: position + 1]) if position >= 1 else None
            self.trace.records.append(
                TraceRecord(
                    step=position,
                    row=loc[0],
                    col=loc[1],
                    mode=self.cfg.mode.value,
                    target=float(self.targets[position]),
                    variability=spread,
                    nme=self._nme() if last else None,
                    variability_ratio=1.0 if last and self.base_variability else None,
                    wall_ms=(time.perf_counter() - started) * 1000.0,
                )
            )
        logger.debug(f"Seeded with {len(seeds)} random candidates")

    def _acquire(self, step: int) -> None:
        started = time.perf_counter()
        locations = self.measured.locations
        measured_rows = [self.candidate_index[loc] for loc in locations]

        self.model = fit(
            self.candidate_patches[measured_rows],
            self.targets,
            self.fit_cfg,
            input_range=self.input_range,
            init=self.model,
        )

        open_rows = np.setdiff1d(np.arange(len(self.candidates)), measured_rows)
        prediction = predict_with_diagnostics(self.model, self.candidate_patches[open_rows])
        if not (np.all(np.isfinite(prediction.mean)) and np.all(np.isfinite(prediction.var))):
            raise NumericalError(f"Step {step}: surrogate produced non-finite predictions")
        if prediction.n_clamped:
            logger.debug(f"Step {step}: clamped {prediction.n_clamped} negative variances")

        acq = np.zeros(len(self.candidates))
        acq[open_rows] = acquisition_values(
            prediction.mean, prediction.var, float(np.max(self.targets)), self.acq_cfg
        )
        index, was_jump = select_index(acq, self.candidates, locations, step, self.acq_cfg)
        loc = self.candidates[index]
        self._measure(loc)
        self._refresh_targets()

        evaluate = step % self.cfg.eval_every == 0 or step == self.cfg.n_steps
        self._record(loc, self.targets[-1], acq[index], was_jump, evaluate, started)


def run_experiment(ds: GridDataset, cfg: RunConfig, threads: int = 1) -> ExperimentTrace:
    """Run one realization; identical (dataset, cfg) give identical traces"""
    return ExperimentEngine(ds, cfg, threads=threads).run()
