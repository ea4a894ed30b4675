"""
Tipos del núcleo de embeddings y del objetivo contrastivo.

Los tensores viven en arrays de numpy float64; las invariantes de forma se
comprueban en la construcción.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

NORM_TOLERANCE = 1e-6

AUDIO_TENSORS = ("audio_proj", "audio_bias", "mixer", "out_proj", "out_bias")
TEXT_TENSORS = ("text_table", "text_proj", "text_bias")
PARAM_NAMES = AUDIO_TENSORS + TEXT_TENSORS


class ModelConfig(BaseModel):
    """Hiperparámetros de los codificadores de juguete"""

    mel_bins: int = Field(default=64, ge=1)
    audio_hidden: int = Field(default=64, ge=1)
    text_hidden: int = Field(default=64, ge=1)
    dim: int = Field(default=64, ge=2)
    mixer_window: int = Field(default=5, ge=1)
    text_buckets: int = Field(default=2 ** 14, ge=2)
    hop_s: float = Field(default=0.02, gt=0.0)
    seed: int = 0


@dataclass(frozen=True)
class FrameEmbeddings:
    matrix: np.ndarray
    frame_duration: float

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1 or self.matrix.shape[1] < 2:
            raise ValueError(f"FrameEmbeddings requiere T>=1 y D>=2, forma {self.matrix.shape}")

    @property
    def num_frames(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


@dataclass(frozen=True)
class TextEmbedding:
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class TensorBundle:
    """Conjunto de tensores con nombre (parámetros, gradientes o momentos)"""

    tensors: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tuple(t.shape) for name, t in self.tensors.items()}

    def zeros_like(self) -> "TensorBundle":
        return type(self)({name: np.zeros_like(t) for name, t in self.tensors.items()})

    def copy(self) -> "TensorBundle":
        return type(self)({name: t.copy() for name, t in self.tensors.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())

    def __add__(self, other: "TensorBundle") -> "TensorBundle":
        return type(self)({name: t + other.tensors[name] for name, t in self.tensors.items()})


class Gradient(TensorBundle):
    """Gradiente congruente en forma con EncoderParams"""


@dataclass(frozen=True)
class EncoderParams:
    config: ModelConfig
    weights: TensorBundle

    def __getitem__(self, name: str) -> np.ndarray:
        return self.weights[name]

    def with_weights(self, weights: TensorBundle) -> "EncoderParams":
        return EncoderParams(config=self.config, weights=weights)


@dataclass(frozen=True)
class FrameSpan:
    t_on: int
    t_off: int

    def __post_init__(self):
        if not 0 <= self.t_on < self.t_off:
            raise ValueError(f"FrameSpan inválido: [{self.t_on}, {self.t_off})")

    @property
    def length(self) -> int:
        return self.t_off - self.t_on


@dataclass(frozen=True)
class BatchAssembly:
    """Lote del objetivo frame-wise: embeddings por clip y regiones (span, texto)"""

    clips: List[np.ndarray]
    regions: List[List[Tuple[FrameSpan, np.ndarray]]]
    temperature: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"la temperatura debe ser positiva: {self.temperature}")
        if len(self.clips) != len(self.regions):
            raise ValueError("clips y regiones deben tener la misma longitud")

    @property
    def region_count(self) -> int:
        return sum(len(r) for r in self.regions)


@dataclass
class EmbeddingGradients:
    """Gradiente de una pérdida respecto a embeddings de frames y de textos"""

    frames: List[np.ndarray]
    texts: List[np.ndarray] = field(default_factory=list)
