"""
Entidades del modelo de datos: regiones anotadas, clips, ontología y splits.

Las entidades son modelos Pydantic inmutables; las invariantes se validan al
construirlas. La cota de duración de clips procesados (15–30 s) sólo se aplica
cuando el contexto de validación trae `processed=True`, porque los manifiestos
crudos (previos al preprocesado) contienen clips de hasta 300 s.
"""

from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationInfo,
    field_validator,
    model_validator,
)

# Tolerancia de sobrepaso del offset respecto a la duración: un frame de 20 ms
REGION_OVERSHOOT_S = 0.02
MIN_CLIP_DURATION_S = 15.0
MAX_CLIP_DURATION_S = 30.0

Interval = Tuple[float, float]


class Region(BaseModel):
    """Región anotada: (onset, offset, texto) con anotador opcional"""

    model_config = ConfigDict(frozen=True)

    onset: float = Field(ge=0.0)
    offset: float
    text: str
    annotator_id: Optional[str] = None
    original_text: Optional[str] = None
    uncleaned: bool = False

    @field_validator("text")
    @classmethod
    def _text_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("el texto de la región está vacío")
        return value

    @model_validator(mode="after")
    def _offset_after_onset(self) -> "Region":
        if not self.offset > self.onset:
            raise ValueError(
                f"offset ({self.offset}) debe ser mayor que onset ({self.onset})"
            )
        return self

    @property
    def duration(self) -> float:
        return self.offset - self.onset


class AnnotatedClip(BaseModel):
    model_config = ConfigDict(frozen=True)

    clip_id: str = Field(min_length=1)
    duration: float = Field(gt=0.0)
    subclass: Optional[str] = None
    audio_path: Optional[str] = None
    weak_caption: Optional[str] = None
    regions: Tuple[Region, ...] = ()

    @model_validator(mode="after")
    def _regions_inside_clip(self, info: ValidationInfo) -> "AnnotatedClip":
        limit = self.duration + REGION_OVERSHOOT_S
        for index, region in enumerate(self.regions):
            if region.offset > limit:
                raise ValueError(
                    f"la región {index} termina en {region.offset} s, "
                    f"más allá de la duración {self.duration} s"
                )
        context = info.context or {}
        if context.get("processed") and not (
            MIN_CLIP_DURATION_S <= self.duration <= MAX_CLIP_DURATION_S
        ):
            raise ValueError(
                f"duración {self.duration} s fuera de "
                f"[{MIN_CLIP_DURATION_S}, {MAX_CLIP_DURATION_S}] para un clip procesado"
            )
        return self

    def regions_by_onset(self) -> List[Region]:
        return sorted(self.regions, key=lambda r: (r.onset, r.offset))

    def annotators(self) -> FrozenSet[str]:
        return frozenset(r.annotator_id for r in self.regions if r.annotator_id)


class OntologyLeaf(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    parent: str = Field(min_length=1)


class Ontology(BaseModel):
    """Ontología de dos niveles: superclases y subclases hoja"""

    model_config = ConfigDict(frozen=True)

    superclasses: Tuple[str, ...]
    subclasses: Tuple[OntologyLeaf, ...]

    @model_validator(mode="after")
    def _consistent(self) -> "Ontology":
        names = list(self.superclasses) + [leaf.name for leaf in self.subclasses]
        duplicated = sorted({n for n in names if names.count(n) > 1})
        if duplicated:
            raise ValueError(f"nombres repetidos en la ontología: {duplicated}")
        known = set(self.superclasses)
        orphans = [leaf.name for leaf in self.subclasses if leaf.parent not in known]
        if orphans:
            raise ValueError(f"subclases sin superclase válida: {orphans}")
        return self

    def parent_of(self) -> Dict[str, str]:
        return {leaf.name: leaf.parent for leaf in self.subclasses}

    def subclass_names(self) -> List[str]:
        return [leaf.name for leaf in self.subclasses]


class DatasetSplit(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_ids: FrozenSet[str]
    test_ids: FrozenSet[str]
    warnings: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def _disjoint(self) -> "DatasetSplit":
        overlap = self.train_ids & self.test_ids
        if overlap:
            raise ValueError(f"train y test comparten {len(overlap)} ids")
        return self


class StatsReport(BaseModel):
    """Estadísticas agregadas de un conjunto de clips anotados"""

    clip_count: int
    region_count: int
    regions_per_clip: float
    duplicate_annotated_clips: int
    audio_hours: float
    region_hours: float
    merged_region_hours: float
    mean_coverage: float
    caption_words_mean: float
    caption_words_std: float
    vocabulary_size: int
    vocabulary_size_no_stopwords: int
    # Conteos por bins de 1 s: [0,1), [1,2), ..., [29,30) y el último abierto >= 30 s
    duration_histogram: List[int]
