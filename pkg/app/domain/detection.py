from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class EvalConfig(BaseModel):
    max_fpr: float = Field(default=0.1, gt=0.0, le=1.0)
    segment_s: float = Field(default=1.0, gt=0.0)
    dtc: float = Field(default=0.7, gt=0.0, le=1.0)
    gtc: float = Field(default=0.7, gt=0.0, le=1.0)
    cttc: float = Field(default=0.3, gt=0.0, le=1.0)
    max_efpr: float = Field(default=100.0, gt=0.0)
    variance_penalty: float = 0.0
    threshold_count: int = Field(default=50, ge=2)


@dataclass(frozen=True)
class ScoreTrack:
    scores: np.ndarray
    frame_duration: float
    clip_id: str
    query: str

    @property
    def num_frames(self) -> int:
        return int(self.scores.shape[0])


@dataclass(frozen=True)
class Event:
    clip_id: str
    label: str
    onset: float
    offset: float

    def __post_init__(self):
        if not self.onset < self.offset:
            raise ValueError(f"evento con onset >= offset: {self}")

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class EventList:
    events: Tuple[Event, ...]
    role: str = "detection"

    def __len__(self) -> int:
        return len(self.events)

    def labels(self) -> List[str]:
        return sorted({e.label for e in self.events})

    def by_clip_and_label(self) -> Dict[Tuple[str, str], List[Event]]:
        grouped: Dict[Tuple[str, str], List[Event]] = {}
        for event in self.events:
            grouped.setdefault((event.clip_id, event.label), []).append(event)
        return grouped

    @classmethod
    def concat(cls, lists: List["EventList"], role: str = "detection") -> "EventList":
        return cls(tuple(e for lst in lists for e in lst.events), role=role)


class PaurocResult(BaseModel):
    per_class: Dict[str, float]
    macro: float
    excluded: List[str] = []


class RetrievalResult(BaseModel):
    map_at_10: float
    r_at_1: float
    r_at_5: float
    r_at_10: float


class MetricReport(BaseModel):
    """Informe de métricas con metadatos de la rejilla de umbrales"""

    pauroc: Optional[PaurocResult] = None
    psds1: Optional[float] = None
    retrieval: Optional[RetrievalResult] = None
    threshold_count: int = 0
    max_fpr: float = 0.1
    segment_s: float = 1.0
    dtc: float = 0.7
    gtc: float = 0.7
    max_efpr: float = 100.0
    variance_penalty: float = 0.0
    clip_count: int = 0
