"""
Objetivos contrastivos: pérdida frame-wise sobre regiones anotadas y pérdida
global simétrica estilo CLAP, ambas con gradiente exacto respecto a los
embeddings.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from app.application.encoders import (
    backward,
    encode_audio,
    encode_text,
    l2_normalize,
    l2_normalize_backward,
)
from app.domain.annotations import Region
from app.domain.embeddings import (
    BatchAssembly,
    EmbeddingGradients,
    EncoderParams,
    FrameSpan,
    Gradient,
)
from app.domain.exceptions import EmptyInputError, InvalidBatchError, ShapeMismatchError, ValidationError
from app.domain.training import LossKind, TrainingExample

# margen para que cocientes exactos (offset = k·δ) no salten de frame por redondeo
_RATIO_TOLERANCE = 1e-9
MIN_BATCH = 2


def region_to_frames(onset: float, offset: float, frame_duration: float, frame_count: int) -> FrameSpan:
    """t_on = floor(onset/δ), t_off = ceil(offset/δ), acotados a [0, T]"""
    if not onset < offset:
        raise ValidationError(f"onset ({onset}) debe ser menor que offset ({offset})", field="offset")
    if frame_duration <= 0:
        raise ValueError(f"δ debe ser positivo: {frame_duration}")
    t_on = int(math.floor(onset / frame_duration + _RATIO_TOLERANCE))
    t_off = int(math.ceil(offset / frame_duration - _RATIO_TOLERANCE))
    t_on = min(max(t_on, 0), frame_count)
    t_off = min(max(t_off, 0), frame_count)
    if t_on >= t_off:
        midpoint = int(math.floor(0.5 * (onset + offset) / frame_duration))
        frame = min(max(midpoint, 0), frame_count - 1)
        return FrameSpan(frame, frame + 1)
    return FrameSpan(t_on, t_off)


def region_spans(regions: Sequence[Region], frame_duration: float, frame_count: int) -> List[FrameSpan]:
    return [region_to_frames(r.onset, r.offset, frame_duration, frame_count) for r in regions]


def frame_similarity(a_t: np.ndarray, d: np.ndarray, temperature: float) -> float:
    return float(np.dot(a_t, d) / temperature)


def frame_posterior(a_t: np.ndarray, positive: np.ndarray, negatives: Sequence[np.ndarray],
                    temperature: float) -> float:
    """p(d⁺ | A_t): softmax sobre {positivo} ∪ negativos"""
    candidates = np.vstack([positive] + list(negatives)) if len(negatives) else positive[None, :]
    logits = candidates @ a_t / temperature
    return float(softmax(logits)[0])


def _require_batch(size: int, where: str) -> None:
    if size < MIN_BATCH:
        raise InvalidBatchError(f"{where} requiere lotes de al menos {MIN_BATCH} clips (N={size})")


def _negative_pool(batch: BatchAssembly) -> Tuple[List[np.ndarray], List[List[Tuple[int, int]]]]:
    """Para cada clip i, la matriz de textos de los demás clips y su origen (clip, región)"""
    pools, origins = [], []
    for i in range(len(batch.clips)):
        rows, where = [], []
        for j, regions in enumerate(batch.regions):
            if j == i:
                continue
            for k, (_, text) in enumerate(regions):
                rows.append(text)
                where.append((j, k))
        dim = batch.clips[i].shape[1]
        pools.append(np.vstack(rows) if rows else np.zeros((0, dim)))
        origins.append(where)
    return pools, origins


def frame_wise_loss(batch: BatchAssembly) -> Tuple[float, EmbeddingGradients]:
    """
    L = −(1/|R|) Σ_r (1/(t_off − t_on)) Σ_{t ∈ [t_on, t_off)} log p(d⁺ | A_t)

    Los negativos de cada clip son todos los textos de regiones de los demás
    clips del lote (sin deduplicar). Devuelve el gradiente respecto a cada
    frame y a cada embedding de texto (una matriz R_i × D por clip).
    """
    _require_batch(len(batch.clips), "frame_wise_loss")
    region_total = batch.region_count
    if region_total == 0:
        raise EmptyInputError("el lote no contiene regiones")

    tau = batch.temperature
    pools, origins = _negative_pool(batch)
    frame_grads = [np.zeros_like(a) for a in batch.clips]
    text_grads = [np.zeros((len(regions), a.shape[1])) for a, regions in zip(batch.clips, batch.regions)]

    loss = 0.0
    for i, (frames, regions) in enumerate(zip(batch.clips, batch.regions)):
        negatives = pools[i]
        negative_grad = np.zeros_like(negatives)
        for k, (span, positive) in enumerate(regions):
            if span.t_off > frames.shape[0]:
                raise ValidationError(
                    f"span [{span.t_on}, {span.t_off}) fuera de T={frames.shape[0]}",
                    field="regions", value=k,
                )
            window = frames[span.t_on:span.t_off]
            candidates = np.vstack([positive[None, :], negatives])
            logits = window @ candidates.T / tau
            log_norm = logsumexp(logits, axis=1)
            weight = 1.0 / (region_total * span.length)
            loss -= weight * float(np.sum(logits[:, 0] - log_norm))

            g_logits = weight * np.exp(logits - log_norm[:, None])
            g_logits[:, 0] -= weight
            frame_grads[i][span.t_on:span.t_off] += g_logits @ candidates / tau
            g_candidates = g_logits.T @ window / tau
            text_grads[i][k] += g_candidates[0]
            negative_grad += g_candidates[1:]

        for row, (j, k) in enumerate(origins[i]):
            text_grads[j][k] += negative_grad[row]

    return loss, EmbeddingGradients(frames=frame_grads, texts=text_grads)


def global_clap_loss(audio_globals: np.ndarray, text_globals: np.ndarray,
                     temperature: float) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    """InfoNCE simétrico con los pares correctos en la diagonal"""
    audio_globals = np.asarray(audio_globals, dtype=np.float64)
    text_globals = np.asarray(text_globals, dtype=np.float64)
    n = audio_globals.shape[0]
    _require_batch(n, "global_clap_loss")
    if text_globals.shape[0] != n:
        raise ShapeMismatchError(f"global_clap_loss: {n} audios frente a {text_globals.shape[0]} textos")

    logits = audio_globals @ text_globals.T / temperature
    diagonal = np.diag(logits)
    audio_to_text = float(np.mean(logsumexp(logits, axis=1) - diagonal))
    text_to_audio = float(np.mean(logsumexp(logits, axis=0) - diagonal))
    loss = 0.5 * (audio_to_text + text_to_audio)

    identity = np.eye(n)
    g_logits = 0.5 * ((softmax(logits, axis=1) - identity) + (softmax(logits, axis=0) - identity)) / n
    g_audio = g_logits @ text_globals / temperature
    g_text = g_logits.T @ audio_globals / temperature
    return loss, (g_audio, g_text)


def pool_global(frames: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Media de los frames re-normalizada; devuelve (vector, norma)"""
    return l2_normalize(frames.mean(axis=0))


def pool_global_backward(frames: np.ndarray, pooled: np.ndarray, norm: np.ndarray,
                         upstream: np.ndarray) -> np.ndarray:
    g_mean = l2_normalize_backward(pooled, norm, upstream)
    return np.broadcast_to(g_mean / frames.shape[0], frames.shape).copy()


def loss_and_gradient(params: EncoderParams, examples: Sequence[TrainingExample],
                      loss_kind: LossKind, temperature: float) -> Tuple[float, Gradient]:
    """Pérdida del modelo completo y su gradiente respecto a los parámetros"""
    _require_batch(len(examples), "loss_and_gradient")
    mels = [ex.mel for ex in examples]
    frames = [encode_audio(params, mel).matrix for mel in mels]

    if LossKind(loss_kind) is LossKind.FRAME_WISE:
        texts: List[str] = []
        regions = []
        for ex, a in zip(examples, frames):
            spans = region_spans(ex.regions, ex.mel.hop, a.shape[0])
            vectors = [encode_text(params, r.text).vector for r in ex.regions]
            texts.extend(r.text for r in ex.regions)
            regions.append(list(zip(spans, vectors)))
        loss, grads = frame_wise_loss(BatchAssembly(frames, regions, temperature))
        text_grads = [g for per_clip in grads.texts for g in per_clip]
        return loss, backward(params, mels, texts, grads.frames, text_grads)

    pooled = [pool_global(a) for a in frames]
    texts = [ex.weak_caption for ex in examples]
    text_vectors = np.vstack([encode_text(params, t).vector for t in texts])
    loss, (g_audio, g_text) = global_clap_loss(np.vstack([p for p, _ in pooled]), text_vectors,
                                               temperature)
    frame_grads = [
        pool_global_backward(a, p, norm, g) for a, (p, norm), g in zip(frames, pooled, g_audio)
    ]
    return loss, backward(params, mels, texts, frame_grads, list(g_text))
