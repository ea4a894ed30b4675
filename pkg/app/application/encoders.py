"""
Codificadores duales de juguete con gradientes analíticos exactos.

Audio: proyección lineal de mel → mezclador temporal causal (media móvil
con pesos entrenables) → proyección lineal a D → normalización ℓ2 por frame.

Texto: bolsa de palabras con hashing (murmurhash3) → suma de embeddings →
proyección lineal a D → normalización ℓ2.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from sklearn.utils import murmurhash3_32

from app.application.dataset_service import tokenize_caption
from app.domain.audio import MelFrames
from app.domain.embeddings import (
    EncoderParams,
    FrameEmbeddings,
    Gradient,
    ModelConfig,
    TensorBundle,
    TextEmbedding,
)
from app.domain.exceptions import EmptyInputError, NonFiniteGradientError, ShapeMismatchError

NORM_FLOOR = 1e-12


def init_params(cfg: ModelConfig) -> EncoderParams:
    rng = np.random.default_rng(cfg.seed)
    tensors = {
        "audio_proj": rng.normal(0.0, 1.0 / np.sqrt(cfg.mel_bins), (cfg.mel_bins, cfg.audio_hidden)),
        "audio_bias": np.zeros(cfg.audio_hidden),
        "mixer": np.full(cfg.mixer_window, 1.0 / cfg.mixer_window),
        "out_proj": rng.normal(0.0, 1.0 / np.sqrt(cfg.audio_hidden), (cfg.audio_hidden, cfg.dim)),
        "out_bias": np.zeros(cfg.dim),
        "text_table": rng.normal(0.0, 1.0, (cfg.text_buckets, cfg.text_hidden)),
        "text_proj": rng.normal(0.0, 1.0 / np.sqrt(cfg.text_hidden), (cfg.text_hidden, cfg.dim)),
        "text_bias": np.zeros(cfg.dim),
    }
    return EncoderParams(config=cfg, weights=TensorBundle(tensors))


def l2_normalize(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Normaliza por filas (o el vector); devuelve también las normas"""
    norms = np.maximum(np.linalg.norm(y, axis=-1, keepdims=True), NORM_FLOOR)
    return y / norms, norms


def l2_normalize_backward(v: np.ndarray, norms: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Jacobiano de x/‖x‖ aplicado al gradiente: (I − vvᵀ)·g / ‖x‖"""
    return (upstream - v * np.sum(v * upstream, axis=-1, keepdims=True)) / norms


def causal_mix(z: np.ndarray, weights: np.ndarray) -> np.ndarray:
    h = weights[0] * z
    for k in range(1, min(len(weights), z.shape[0])):
        h[k:] += weights[k] * z[:-k]
    return h


@dataclass(frozen=True)
class _AudioCache:
    mel: np.ndarray
    z: np.ndarray
    h: np.ndarray
    a: np.ndarray
    norms: np.ndarray


@dataclass(frozen=True)
class _TextCache:
    buckets: np.ndarray
    counts: np.ndarray
    x: np.ndarray
    d: np.ndarray
    norm: np.ndarray


def _audio_forward(params: EncoderParams, mel: MelFrames) -> _AudioCache:
    frames = np.asarray(mel.frames, dtype=np.float64)
    expected = params["audio_proj"].shape[0]
    if frames.ndim != 2 or frames.shape[1] != expected:
        raise ShapeMismatchError(
            f"mel con {frames.shape[-1]} bins; el codificador espera {expected}"
        )
    if not np.all(np.isfinite(frames)):
        raise ValueError("mel con valores no finitos")
    z = frames @ params["audio_proj"] + params["audio_bias"]
    h = causal_mix(z, params["mixer"])
    y = h @ params["out_proj"] + params["out_bias"]
    a, norms = l2_normalize(y)
    return _AudioCache(frames, z, h, a, norms)


def encode_audio(params: EncoderParams, mel: MelFrames) -> FrameEmbeddings:
    cache = _audio_forward(params, mel)
    return FrameEmbeddings(matrix=cache.a, frame_duration=mel.hop)


def hash_tokens(text: str, buckets: int) -> Tuple[np.ndarray, np.ndarray]:
    """Índices de bucket únicos y sus conteos para un texto"""
    tokens = tokenize_caption(text)
    if not tokens:
        raise EmptyInputError(f"texto vacío para el codificador: {text!r}")
    ids = np.array([murmurhash3_32(tok, seed=0, positive=True) % buckets for tok in tokens])
    unique, counts = np.unique(ids, return_counts=True)
    return unique, counts.astype(np.float64)


def _text_forward(params: EncoderParams, text: str) -> _TextCache:
    buckets, counts = hash_tokens(text, params["text_table"].shape[0])
    x = counts @ params["text_table"][buckets]
    y = x @ params["text_proj"] + params["text_bias"]
    d, norm = l2_normalize(y)
    return _TextCache(buckets, counts, x, d, norm)


def encode_text(params: EncoderParams, text: str) -> TextEmbedding:
    return TextEmbedding(vector=_text_forward(params, text).d)


def _check_upstream(upstream: np.ndarray, shape: Tuple[int, ...], what: str) -> None:
    if upstream.shape != shape:
        raise ShapeMismatchError(f"gradiente de {what} con forma {upstream.shape}, se esperaba {shape}")
    if not np.all(np.isfinite(upstream)):
        raise NonFiniteGradientError(f"gradiente no finito recibido para {what}")


def _audio_backward(params: EncoderParams, cache: _AudioCache, g_a: np.ndarray, grads: dict) -> None:
    g_y = l2_normalize_backward(cache.a, cache.norms, g_a)
    grads["out_proj"] += cache.h.T @ g_y
    grads["out_bias"] += g_y.sum(axis=0)
    g_h = g_y @ params["out_proj"].T

    mixer = params["mixer"]
    z = cache.z
    g_z = mixer[0] * g_h
    grads["mixer"][0] += np.sum(g_h * z)
    for k in range(1, min(len(mixer), z.shape[0])):
        grads["mixer"][k] += np.sum(g_h[k:] * z[:-k])
        g_z[:-k] += mixer[k] * g_h[k:]

    grads["audio_proj"] += cache.mel.T @ g_z
    grads["audio_bias"] += g_z.sum(axis=0)


def _text_backward(params: EncoderParams, cache: _TextCache, g_d: np.ndarray, grads: dict) -> None:
    g_y = l2_normalize_backward(cache.d, cache.norm, g_d)
    grads["text_proj"] += np.outer(cache.x, g_y)
    grads["text_bias"] += g_y
    g_x = params["text_proj"] @ g_y
    grads["text_table"][cache.buckets] += cache.counts[:, None] * g_x


def backward(params: EncoderParams,
             mels: Sequence[MelFrames],
             texts: Sequence[str],
             frame_grads: Sequence[np.ndarray],
             text_grads: Sequence[np.ndarray]) -> Gradient:
    """
    Gradiente exacto de los parámetros dado el gradiente aguas arriba de
    cada salida (frames por clip, un vector por texto).

    Rehace la pasada hacia delante: las funciones son puras y no guardan estado.
    """
    if len(mels) != len(frame_grads) or len(texts) != len(text_grads):
        raise ShapeMismatchError("número de entradas y de gradientes aguas arriba no coincide")

    grads = {name: np.zeros_like(t) for name, t in params.weights.items()}
    for mel, g_a in zip(mels, frame_grads):
        cache = _audio_forward(params, mel)
        _check_upstream(np.asarray(g_a), cache.a.shape, "frames")
        _audio_backward(params, cache, g_a, grads)
    for text, g_d in zip(texts, text_grads):
        cache = _text_forward(params, text)
        _check_upstream(np.asarray(g_d), cache.d.shape, "texto")
        _text_backward(params, cache, g_d, grads)
    return Gradient(grads)


def encode_batch(params: EncoderParams, mels: Sequence[MelFrames],
                 texts: Sequence[str]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    frames = [encode_audio(params, mel).matrix for mel in mels]
    vectors = [encode_text(params, text).vector for text in texts]
    return frames, vectors
