"""
Contratos que la infraestructura implementa.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Tuple

from app.domain.annotations import AnnotatedClip
from app.domain.captions import CompletionRequest
from app.domain.embeddings import EncoderParams


class ManifestRepository(ABC):
    @abstractmethod
    def load(self, path: Path, processed: bool = True) -> List[AnnotatedClip]:
        pass

    @abstractmethod
    def save(self, path: Path, clips: List[AnnotatedClip]) -> None:
        pass


class CheckpointRepository(ABC):
    @abstractmethod
    def save(self, path: Path, params: EncoderParams, metadata: Dict[str, str] = None) -> None:
        pass

    @abstractmethod
    def load(self, path: Path) -> Tuple[EncoderParams, Dict[str, str]]:
        pass


class CompletionClient(ABC):
    """Cliente de completado de chat; el mock determinista implementa el mismo contrato"""

    @abstractmethod
    def complete(self, request: CompletionRequest) -> str:
        pass


class CheckpointSeries(ABC):
    """Serie de checkpoints de una ejecución de entrenamiento"""

    @abstractmethod
    def save_epoch(self, epoch: int, params: EncoderParams, metadata: Dict[str, str] = None) -> Path:
        pass

    @abstractmethod
    def save_best(self, params: EncoderParams, metadata: Dict[str, str] = None) -> Path:
        pass


class MetricSink(ABC):
    """Registro de métricas por paso, sólo de anexado"""

    @abstractmethod
    def append(self, step: int, epoch: int, lr: float, loss: float) -> None:
        pass
