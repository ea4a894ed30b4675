"""
Casos de uso del modelo de datos: fusión de intervalos, cobertura temporal,
estadísticas del corpus y split estratificado por subclase.

Todas las funciones son puras sobre entradas inmutables.
"""

import logging
import math
import string
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from app.domain.annotations import (
    AnnotatedClip,
    DatasetSplit,
    Interval,
    Ontology,
    Region,
    StatsReport,
)
from app.domain.exceptions import EmptyInputError, ValidationError

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 31  # [0,1), ..., [29,30) y el bin abierto >= 30 s


def merge_intervals(intervals: Iterable[Interval]) -> List[Interval]:
    """Barrido ordenado por onset; intervalos que se tocan se fusionan"""
    ordered = sorted((float(a), float(b)) for a, b in intervals)
    merged: List[List[float]] = []
    for onset, offset in ordered:
        if merged and onset <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], offset)
        else:
            merged.append([onset, offset])
    return [(a, b) for a, b in merged]


def merge_overlapping_regions(regions: Sequence[Region]) -> List[Interval]:
    return merge_intervals((r.onset, r.offset) for r in regions)


def coverage(clip: AnnotatedClip) -> float:
    """Fracción de la duración del clip cubierta por la unión de sus regiones"""
    covered = 0.0
    for onset, offset in merge_overlapping_regions(clip.regions):
        covered += max(0.0, min(offset, clip.duration) - onset)
    return min(1.0, max(0.0, covered / clip.duration))


def tokenize_caption(text: str) -> List[str]:
    """Case-fold, separa por espacios y quita puntuación en los extremos"""
    tokens = []
    for raw in text.split():
        token = raw.casefold().strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


def vocabulary(captions: Iterable[str], remove_stop_words: bool = False) -> set:
    vocab = set()
    for caption in captions:
        vocab.update(tokenize_caption(caption))
    if remove_stop_words:
        vocab -= ENGLISH_STOP_WORDS
    return vocab


def duration_histogram(durations: Iterable[float]) -> List[int]:
    counts = [0] * HISTOGRAM_BINS
    for duration in durations:
        counts[min(int(math.floor(duration)), HISTOGRAM_BINS - 1)] += 1
    return counts


def dataset_stats(clips: Sequence[AnnotatedClip]) -> StatsReport:
    if not clips:
        raise EmptyInputError("dataset_stats requiere al menos un clip")

    regions = [r for clip in clips for r in clip.regions]
    captions = [r.text for r in regions]
    word_counts = np.array([len(c.split()) for c in captions], dtype=np.float64)

    merged_seconds = 0.0
    for clip in clips:
        merged_seconds += sum(
            max(0.0, min(b, clip.duration) - a) for a, b in merge_overlapping_regions(clip.regions)
        )

    return StatsReport(
        clip_count=len(clips),
        region_count=len(regions),
        regions_per_clip=len(regions) / len(clips),
        duplicate_annotated_clips=sum(1 for clip in clips if len(clip.annotators()) > 1),
        audio_hours=math.fsum(clip.duration for clip in clips) / 3600.0,
        region_hours=math.fsum(r.duration for r in regions) / 3600.0,
        merged_region_hours=merged_seconds / 3600.0,
        mean_coverage=math.fsum(coverage(clip) for clip in clips) / len(clips),
        caption_words_mean=float(word_counts.mean()) if len(word_counts) else 0.0,
        caption_words_std=float(word_counts.std()) if len(word_counts) else 0.0,
        vocabulary_size=len(vocabulary(captions)),
        vocabulary_size_no_stopwords=len(vocabulary(captions, remove_stop_words=True)),
        duration_histogram=duration_histogram(r.duration for r in regions),
    )


def _largest_remainder(counts: Dict[str, int], fraction: float) -> Dict[str, int]:
    exact = {name: n * fraction for name, n in counts.items()}
    allotted = {name: int(math.floor(value)) for name, value in exact.items()}
    total = int(math.floor(sum(counts.values()) * fraction + 0.5))
    missing = total - sum(allotted.values())
    by_remainder = sorted(exact, key=lambda name: (-(exact[name] - allotted[name]), name))
    for name in by_remainder[:max(0, missing)]:
        allotted[name] += 1
    return allotted


def stratified_split(clips: Sequence[AnnotatedClip],
                     test_fraction: float,
                     seed: int,
                     ontology: Optional[Ontology] = None) -> DatasetSplit:
    """
    Split train/test que preserva la distribución de subclases.

    Los conteos de test por subclase son floor(n·f) más una corrección por
    mayor resto, de modo que el total es round(N·f) y cada subclase queda a
    menos de un clip de su proporción exacta.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction debe estar en (0, 1): {test_fraction}")

    groups: Dict[str, List[str]] = defaultdict(list)
    for index, clip in enumerate(clips):
        if not clip.subclass:
            raise ValidationError("el clip no tiene subclase", field="subclass",
                                  record_index=index, clip_id=clip.clip_id)
        groups[clip.subclass].append(clip.clip_id)

    warnings = []
    if ontology is not None:
        for name in ontology.subclass_names():
            if name not in groups:
                message = f"subclase '{name}' sin clips; se omite"
                logger.warning("⚠️ %s", message)
                warnings.append(message)

    test_counts = _largest_remainder({name: len(ids) for name, ids in groups.items()}, test_fraction)
    rng = np.random.default_rng(seed)
    train_ids, test_ids = set(), set()
    for name in sorted(groups):
        ids = sorted(groups[name])
        order = rng.permutation(len(ids))
        chosen = {ids[i] for i in order[:test_counts[name]]}
        test_ids.update(chosen)
        train_ids.update(i for i in ids if i not in chosen)

    split = DatasetSplit(train_ids=frozenset(train_ids), test_ids=frozenset(test_ids),
                         warnings=tuple(warnings))
    logger.info("✅ Split estratificado: %s train / %s test en %s subclases",
                len(split.train_ids), len(split.test_ids), len(groups))
    return split


def validate_against_ontology(clips: Sequence[AnnotatedClip], ontology: Ontology) -> List[ValidationError]:
    known = set(ontology.subclass_names())
    return [
        ValidationError(f"subclase desconocida '{clip.subclass}'", field="subclass",
                        value=clip.subclass, record_index=index, clip_id=clip.clip_id)
        for index, clip in enumerate(clips)
        if clip.subclass not in known
    ]


def shift_regions(regions: Sequence[Region], start_s: float, duration: float) -> List[Region]:
    """Lleva regiones a la línea temporal de un clip recortado en [start_s, start_s + duration)"""
    shifted = []
    for region in regions:
        onset = max(0.0, region.onset - start_s)
        offset = min(duration, region.offset - start_s)
        if offset > onset:
            shifted.append(region.model_copy(update={"onset": onset, "offset": offset}))
    return shifted
