"""
Experiment trace records
One record per measured location, seeds first, plus the run's provenance
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .models import Location


@dataclass
class TraceRecord:
    """A single measurement of an experiment"""

    step: int
    row: int
    col: int
    mode: str
    target: float
    acq: float = 0.0
    was_jump: bool = False
    variability: Optional[float] = None
    nme: Optional[float] = None
    variability_ratio: Optional[float] = None
    wall_ms: float = 0.0

    @property
    def location(self) -> Location:
        return (self.row, self.col)


@dataclass
class ExperimentTrace:
    """
    Ordered measurement records of one realization.

    `config` is the JSON snapshot of the run configuration; `complete` is
    False when the run aborted and the records stop early.
    """

    config: Dict[str, Any]
    dataset_hash: str
    records: List[TraceRecord] = field(default_factory=list)
    complete: bool = True
    error: Optional[str] = None

    def __len__(self) -> int:
        return len(self.records)

    def locations(self) -> List[Location]:
        return [record.location for record in self.records]

    def jump_count(self) -> int:
        return sum(1 for record in self.records if record.was_jump)

    def nme_series(self) -> List[Tuple[int, float]]:
        return [(r.step, r.nme) for r in self.records if r.nme is not None]

    def variability_series(self) -> List[Tuple[int, float]]:
        return [(r.step, r.variability) for r in self.records if r.variability is not None]

    def final_nme(self) -> Optional[float]:
        series = self.nme_series()
        return series[-1][1] if series else None

    def final_variability(self) -> Optional[float]:
        series = self.variability_series()
        return series[-1][1] if series else None

    def summary(self) -> Dict[str, Any]:
        return {
            "records": len(self.records),
            "jump_count": self.jump_count(),
            "final_nme": self.final_nme(),
            "final_variability": self.final_variability(),
        }
