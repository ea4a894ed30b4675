from dataclasses import dataclass
from typing import Dict, Tuple

from pydantic import BaseModel, Field, model_validator

from app.domain.annotations import AnnotatedClip, Ontology
from app.domain.audio import Waveform
from app.domain.detection import Event, EventList


class SynthSpec(BaseModel):
    """Especificación del corpus sintético de referencia"""

    class_count: int = Field(default=5, ge=1, le=5)
    clips_per_class: int = Field(default=40, ge=1)
    clip_duration: Tuple[float, float] = (15.0, 30.0)
    event_duration: Tuple[float, float] = (1.0, 4.0)
    events_per_clip: int = Field(default=2, ge=1)
    noise_floor_db: float = -30.0
    sample_rate: int = 32000
    seed: int = 7

    @model_validator(mode="after")
    def _ranges(self) -> "SynthSpec":
        lo, hi = self.clip_duration
        if not 15.0 <= lo <= hi <= 30.0:
            raise ValueError(f"clip_duration debe estar dentro de [15, 30] s: {self.clip_duration}")
        ev_lo, ev_hi = self.event_duration
        if not 0.0 < ev_lo <= ev_hi:
            raise ValueError(f"event_duration inválido: {self.event_duration}")
        if self.events_per_clip * ev_hi > lo:
            raise ValueError(
                f"{self.events_per_clip} eventos de hasta {ev_hi} s no caben en clips de {lo} s"
            )
        return self


@dataclass(frozen=True)
class SynthClass:
    """Clase sintética: plantilla acústica, captions de región y descripción"""

    name: str
    captions: Tuple[str, ...]
    description: str


@dataclass(frozen=True)
class SynthClip:
    clip: AnnotatedClip
    waveform: Waveform
    events: Tuple[Event, ...]


@dataclass(frozen=True)
class SynthCorpus:
    clips: Tuple[AnnotatedClip, ...]
    truth: EventList
    descriptions: Dict[str, str]
    ontology: Ontology
