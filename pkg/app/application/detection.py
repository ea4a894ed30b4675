"""
Detección de eventos sonoros a partir de texto y métricas de evaluación.

- `score_track`: similitud coseno por frame entre una consulta y el audio.
- `segment_pauroc`: AUROC parcial a nivel de segmento (FPR ≤ max_fpr, normalizado).
- `psds1`: PSDS a nivel de evento (DTC/GTC) calculado con `psds_eval`, sin
  penalización de varianza ni coste de disparos cruzados.
- `retrieval_metrics`: mAP@10 y R@k para recuperación texto → audio.
"""

import logging
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from psds_eval import PSDSEval
from psds_eval.psds import PSDSEvalError
from sklearn.metrics import auc, roc_curve

from app.application.encoders import encode_audio, encode_text
from app.application.objectives import pool_global
from app.domain.audio import MelFrames
from app.domain.detection import (
    EvalConfig,
    Event,
    EventList,
    MetricReport,
    PaurocResult,
    RetrievalResult,
    ScoreTrack,
)
from app.domain.embeddings import EncoderParams, FrameEmbeddings, TextEmbedding
from app.domain.exceptions import MetricUndefinedError, ShapeMismatchError

logger = logging.getLogger(__name__)

_GRID_TOLERANCE = 1e-9
RETRIEVAL_CUTOFF = 10
PSDS_COLUMNS = ["filename", "onset", "offset", "event_label"]


def threshold_grid(count: int = 50) -> np.ndarray:
    return np.linspace(-1.0, 1.0, count)


def score_track(frames: FrameEmbeddings, query: TextEmbedding,
                clip_id: str = "", query_text: str = "") -> ScoreTrack:
    """scores[t] = A_t · d"""
    if frames.dim != query.dim:
        raise ShapeMismatchError(f"frames con D={frames.dim} y consulta con D={query.dim}")
    scores = np.clip(frames.matrix @ query.vector, -1.0, 1.0)
    return ScoreTrack(scores=scores, frame_duration=frames.frame_duration,
                      clip_id=clip_id, query=query_text)


def _overlaps(onset: float, offset: float, events: Sequence[Event]) -> bool:
    return any(e.onset < offset and e.offset > onset for e in events)


def segment_scores(track: ScoreTrack, segment_s: float) -> np.ndarray:
    """Máximo de los frames cuyo inicio cae en cada segmento"""
    starts = np.arange(track.num_frames) * track.frame_duration
    segment_of = np.floor(starts / segment_s + _GRID_TOLERANCE).astype(int)
    count = int(segment_of[-1]) + 1 if track.num_frames else 0
    result = np.full(count, -np.inf)
    np.maximum.at(result, segment_of, track.scores)
    # segmentos más cortos que un frame: toman el frame que los cubre
    covering = np.minimum(np.floor(np.arange(count) * segment_s / track.frame_duration + _GRID_TOLERANCE),
                          track.num_frames - 1).astype(int)
    return np.where(np.isfinite(result), result, track.scores[covering])


def partial_auroc(labels: np.ndarray, scores: np.ndarray, max_fpr: float) -> float:
    """Área bajo la ROC hasta `max_fpr`, dividida por `max_fpr`"""
    fpr, tpr, _ = roc_curve(labels, scores, drop_intermediate=False)
    if max_fpr >= 1.0:
        return float(auc(fpr, tpr))
    stop = int(np.searchsorted(fpr, max_fpr, side="right"))
    tpr_at_max = np.interp(max_fpr, fpr[stop - 1:stop + 1], tpr[stop - 1:stop + 1])
    fpr = np.append(fpr[:stop], max_fpr)
    tpr = np.append(tpr[:stop], tpr_at_max)
    return float(auc(fpr, tpr) / max_fpr)


def segment_pauroc(tracks: Sequence[ScoreTrack], truth: EventList,
                   max_fpr: float = 0.1, segment_s: float = 1.0) -> PaurocResult:
    """
    pAUROC por clase y macro. Cada pista aporta segmentos a la clase de su
    `query`; un segmento es positivo si algún evento de referencia de esa
    clase lo solapa. Las clases sin segmentos positivos o sin negativos se
    excluyen y se listan en `excluded`.
    """
    grouped = truth.by_clip_and_label()
    labels: Dict[str, List[np.ndarray]] = {}
    scores: Dict[str, List[np.ndarray]] = {}
    for track in tracks:
        seg = segment_scores(track, segment_s)
        events = grouped.get((track.clip_id, track.query), [])
        positive = np.array([
            _overlaps(k * segment_s, (k + 1) * segment_s, events) for k in range(len(seg))
        ], dtype=int)
        labels.setdefault(track.query, []).append(positive)
        scores.setdefault(track.query, []).append(seg)

    per_class: Dict[str, float] = {}
    excluded: List[str] = []
    for label in sorted(labels):
        y = np.concatenate(labels[label])
        s = np.concatenate(scores[label])
        if y.min() == y.max():
            excluded.append(label)
            continue
        per_class[label] = partial_auroc(y, s, max_fpr)

    if excluded:
        logger.warning("⚠️ Clases excluidas del pAUROC (sin positivos o sin negativos): %s", excluded)
    if not per_class:
        raise MetricUndefinedError("ninguna clase tiene segmentos positivos y negativos")
    return PaurocResult(per_class=per_class, macro=float(np.mean(list(per_class.values()))),
                        excluded=excluded)


def extract_events(track: ScoreTrack, threshold: float) -> EventList:
    """Rachas máximas de frames con score ≥ umbral → eventos [inicio·δ, fin·δ)"""
    active = np.concatenate([[False], track.scores >= threshold, [False]])
    edges = np.flatnonzero(np.diff(active.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2]
    events = tuple(
        Event(track.clip_id, track.query, float(s * track.frame_duration), float(e * track.frame_duration))
        for s, e in zip(starts, ends)
    )
    return EventList(events, role="detection")


def _event_frame(events: EventList, one_based: bool = False) -> pd.DataFrame:
    """Tabla de eventos con las columnas de PSDSEval; las detecciones se indexan desde 1"""
    frame = pd.DataFrame([(e.clip_id, e.onset, e.offset, e.label) for e in events.events],
                         columns=PSDS_COLUMNS)
    if one_based:
        frame.index = pd.RangeIndex(1, len(frame) + 1, name="index")
    return frame


def psds1(detections_per_threshold: Mapping[float, EventList],
          truth: EventList,
          audio_durations: Mapping[str, float],
          dtc: float = 0.7,
          gtc: float = 0.7,
          max_efpr: float = 100.0,
          variance_penalty: float = 0.0,
          cttc: float = 0.3) -> float:
    """
    PSDS por intersección con `psds_eval`: un punto operativo por umbral,
    sin coste de disparos cruzados (alpha_ct = 0). El eFPR se mide en falsos
    positivos por hora de audio evaluado (suma de `audio_durations`).

    Las detecciones de clases sin eventos de referencia se ignoran; un umbral
    sin detecciones no añade área y no se registra.
    """
    if len(truth) == 0:
        raise MetricUndefinedError("PSDS no está definido sin eventos de referencia")
    if float(sum(audio_durations.values())) <= 0:
        raise MetricUndefinedError("duración total de audio evaluado nula")

    metadata = pd.DataFrame({"filename": list(audio_durations),
                             "duration": [float(d) for d in audio_durations.values()]})
    try:
        evaluator = PSDSEval(dtc_threshold=dtc, gtc_threshold=gtc, cttc_threshold=cttc,
                             ground_truth=_event_frame(truth), metadata=metadata)
    except PSDSEvalError as e:
        raise MetricUndefinedError(f"referencia inválida para PSDS: {e}") from e

    labels = set(truth.labels())
    added = 0
    for index, threshold in enumerate(sorted(detections_per_threshold)):
        kept = EventList(tuple(e for e in detections_per_threshold[threshold].events if e.label in labels))
        if len(kept) == 0:
            continue
        evaluator.add_operating_point(_event_frame(kept, one_based=True),
                                      info={"name": f"op_{index:03d}", "threshold": float(threshold)})
        added += 1
    if added == 0:
        return 0.0

    try:
        score = evaluator.psds(alpha_ct=0.0, alpha_st=variance_penalty, max_efpr=max_efpr)
    except PSDSEvalError as e:
        raise MetricUndefinedError(f"PSDS no calculable: {e}") from e
    return float(score.value)


def retrieval_ranks(similarity: np.ndarray, ground_truth: Sequence[int]) -> np.ndarray:
    """Rango (1 = primero) del audio correcto de cada texto; empates por índice de audio"""
    similarity = np.asarray(similarity, dtype=np.float64)
    ranks = np.empty(similarity.shape[0], dtype=int)
    for i, j in enumerate(ground_truth):
        row = similarity[i]
        target = row[j]
        ranks[i] = 1 + int(np.sum(row > target)) + int(np.sum(row[:j] == target))
    return ranks


def retrieval_metrics(similarity: np.ndarray, ground_truth: Sequence[int]) -> RetrievalResult:
    ranks = retrieval_ranks(similarity, ground_truth)
    ap = np.where(ranks <= RETRIEVAL_CUTOFF, 1.0 / ranks, 0.0)
    return RetrievalResult(
        map_at_10=float(ap.mean()),
        r_at_1=float(np.mean(ranks <= 1)),
        r_at_5=float(np.mean(ranks <= 5)),
        r_at_10=float(np.mean(ranks <= 10)),
    )


def detection_tracks(params: EncoderParams, mels: Mapping[str, MelFrames],
                     class_queries: Mapping[str, str]) -> List[ScoreTrack]:
    """Una pista por (clip, clase); la consulta es la descripción o el nombre de la clase"""
    queries = {label: encode_text(params, text) for label, text in class_queries.items()}
    tracks = []
    for clip_id in sorted(mels):
        frames = encode_audio(params, mels[clip_id])
        for label in sorted(queries):
            tracks.append(score_track(frames, queries[label], clip_id=clip_id, query_text=label))
    return tracks


def evaluate_detection(params: EncoderParams,
                       mels: Mapping[str, MelFrames],
                       truth: EventList,
                       class_queries: Mapping[str, str],
                       cfg: EvalConfig = EvalConfig(),
                       audio_durations: Optional[Mapping[str, float]] = None) -> MetricReport:
    """pAUROC por segmentos y PSDS1 sobre los clips dados"""
    if not mels:
        raise MetricUndefinedError("no hay clips que evaluar")
    clip_ids = set(mels)
    truth = EventList(tuple(e for e in truth.events if e.clip_id in clip_ids and e.label in class_queries),
                      role="ground_truth")
    if audio_durations is None:
        audio_durations = {cid: mel.num_frames * mel.hop for cid, mel in mels.items()}

    tracks = detection_tracks(params, mels, class_queries)
    pauroc = segment_pauroc(tracks, truth, cfg.max_fpr, cfg.segment_s)

    grid = threshold_grid(cfg.threshold_count)
    detections = {
        float(th): EventList.concat([extract_events(t, th) for t in tracks]) for th in grid
    }
    psds = psds1(detections, truth, {cid: audio_durations[cid] for cid in clip_ids},
                 cfg.dtc, cfg.gtc, cfg.max_efpr, cfg.variance_penalty, cfg.cttc)

    logger.info("✅ Detección evaluada: pAUROC macro=%.4f PSDS1=%.4f (%s clips, %s clases)",
                pauroc.macro, psds, len(mels), len(class_queries))
    return MetricReport(
        pauroc=pauroc, psds1=psds, threshold_count=cfg.threshold_count, max_fpr=cfg.max_fpr,
        segment_s=cfg.segment_s, dtc=cfg.dtc, gtc=cfg.gtc, max_efpr=cfg.max_efpr,
        variance_penalty=cfg.variance_penalty, clip_count=len(mels),
    )


def evaluate_retrieval(params: EncoderParams, mels: Mapping[str, MelFrames],
                       captions: Mapping[str, str]) -> RetrievalResult:
    """Recuperación texto → audio con embeddings globales y el caption débil de cada clip"""
    clip_ids = sorted(cid for cid in mels if captions.get(cid))
    if len(clip_ids) < 1:
        raise MetricUndefinedError("ningún clip tiene caption débil para recuperar")
    audio = np.vstack([pool_global(encode_audio(params, mels[cid]).matrix)[0] for cid in clip_ids])
    text = np.vstack([encode_text(params, captions[cid]).vector for cid in clip_ids])
    result = retrieval_metrics(text @ audio.T, list(range(len(clip_ids))))
    logger.info("✅ Recuperación: mAP@10=%.4f R@1=%.4f R@10=%.4f", result.map_at_10,
                result.r_at_1, result.r_at_10)
    return result

