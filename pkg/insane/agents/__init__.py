"""
Experiment Agents
Acquisition, strategic sampling, and the autonomous experiment loop
"""

from .acquisition import (
    AcquisitionConfig,
    AcquisitionKind,
    expected_improvement,
    proximity_cost,
    select_next,
    ucb,
)
from .engine import (
    ExperimentEngine,
    ExperimentMode,
    RunConfig,
    compute_targets,
    run_experiment,
)

__all__ = [
    "AcquisitionConfig",
    "AcquisitionKind",
    "expected_improvement",
    "proximity_cost",
    "select_next",
    "ucb",
    "ExperimentEngine",
    "ExperimentMode",
    "RunConfig",
    "compute_targets",
    "run_experiment",
]
