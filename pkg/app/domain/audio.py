from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field


@dataclass(frozen=True)
class Waveform:
    """Secuencia mono de muestras y su frecuencia de muestreo"""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate debe ser positivo: {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("Waveform espera una señal mono (1-D)")
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.num_samples else 0.0


@dataclass(frozen=True)
class MelFrames:
    """Matriz T×M de energías log-mel"""

    frames: np.ndarray
    hop: float

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def mel_bins(self) -> int:
        return int(self.frames.shape[1])


class AudioConfig(BaseModel):
    """Parámetros de la cadena de preprocesado y del frontend mel"""

    threshold_db: float = Field(default=60.0, gt=0.0)
    target_rate: int = Field(default=32000, ge=8000)
    min_duration_s: float = 15.0
    max_duration_s: float = 30.0
    max_input_duration_s: float = 300.0
    segment_hop_s: float = Field(default=0.1, gt=0.0)
    fade_s: float = Field(default=0.016, gt=0.0)
    hop_s: float = Field(default=0.02, gt=0.0)
    mel_bins: int = Field(default=64, ge=2)
    n_fft: int = 1024
    resampler_zero_crossings: int = 32  # 2·32 = núcleo de 64 taps
    resampler_beta: float = 8.0


@dataclass(frozen=True)
class PreprocessOutcome:
    """Resultado de la cadena completa sobre un clip"""

    status: str
    waveform: Optional[Waveform]
    # desplazamiento (s, en la línea temporal original) del primer sample conservado
    start_s: float = 0.0
    reason: str = ""

    @property
    def kept(self) -> bool:
        return self.status == "kept"
