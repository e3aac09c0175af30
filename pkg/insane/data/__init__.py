"""
Datasets, Synthetic Generation, and Traces
"""

from .models import (
    DEFAULT_PATCH_SIDE,
    DomainClass,
    GridDataset,
    Location,
    MeasuredSet,
    Patch,
    VoltageWaveform,
    candidate_locations,
    extract_patch,
    extract_patches,
    spectrum_at,
)
from .storage import load_dataset, save_dataset
from .synth import (
    AnomalyConfig,
    ClassLoops,
    LayoutConfig,
    LayoutKind,
    LoopParams,
    SynthConfig,
    disk_pixel_count,
    generate,
    generate_labels,
    loop_model,
)
from .trace import ExperimentTrace, TraceRecord

__all__ = [
    "DEFAULT_PATCH_SIDE",
    "DomainClass",
    "GridDataset",
    "Location",
    "MeasuredSet",
    "Patch",
    "VoltageWaveform",
    "candidate_locations",
    "extract_patch",
    "extract_patches",
    "spectrum_at",
    "load_dataset",
    "save_dataset",
    "AnomalyConfig",
    "ClassLoops",
    "LayoutConfig",
    "LayoutKind",
    "LoopParams",
    "SynthConfig",
    "disk_pixel_count",
    "generate",
    "generate_labels",
    "loop_model",
    "ExperimentTrace",
    "TraceRecord",
]
