from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from app.domain.annotations import Region
from app.domain.audio import MelFrames
from app.domain.embeddings import EncoderParams, TensorBundle

TEMPERATURE_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4)


class LossKind(str, Enum):
    GLOBAL = "global"
    FRAME_WISE = "frame_wise"


class TrainConfig(BaseModel):
    batch_size: int = Field(default=32, ge=2)
    epochs: int = Field(default=6, ge=1)
    peak_lr: float = 6e-4
    final_lr: float = 1e-7
    warmup_epochs: float = Field(default=1.0, ge=0.0)
    temperature: float = Field(default=0.1, gt=0.0)
    seed: int = 0
    loss_kind: LossKind = LossKind.FRAME_WISE
    val_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @model_validator(mode="after")
    def _lr_order(self) -> "TrainConfig":
        if not self.peak_lr > self.final_lr > 0:
            raise ValueError(
                f"se requiere peak_lr > final_lr > 0 (peak={self.peak_lr}, final={self.final_lr})"
            )
        return self

    @classmethod
    def pretraining(cls, **overrides) -> "TrainConfig":
        """Preset de preentrenamiento con la pérdida global"""
        values = dict(epochs=20, peak_lr=6e-5, final_lr=1e-7, temperature=0.05,
                      loss_kind=LossKind.GLOBAL)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def finetuning(cls, **overrides) -> "TrainConfig":
        values = dict(epochs=6, peak_lr=6e-4, final_lr=1e-7)
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class OptimizerState:
    """Momentos de Adam y contador de pasos"""

    first_moment: TensorBundle
    second_moment: TensorBundle
    step: int = 0

    @classmethod
    def zeros(cls, params: EncoderParams) -> "OptimizerState":
        return cls(params.weights.zeros_like(), params.weights.zeros_like(), 0)


@dataclass(frozen=True)
class TrainingExample:
    """Clip listo para entrenar: features mel y anotaciones"""

    clip_id: str
    mel: MelFrames
    regions: Tuple[Region, ...]
    weak_caption: str
    subclass: Optional[str] = None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    skipped_steps: int


@dataclass
class TrainResult:
    final_params: EncoderParams
    best_params: EncoderParams
    best_epoch: int
    history: List[EpochRecord]
    temperature: float

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch - 1].val_loss
