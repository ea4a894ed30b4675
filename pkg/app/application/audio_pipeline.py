"""
Cadena de preprocesado de audio y frontend log-mel.

Orden de la cadena completa (`preprocess_clip`): normalización de pico →
recorte de silencio → descarte < 15 s → remuestreo a 32 kHz → segmento de
máxima energía si dura más de 30 s → fundido Hamming de 16 ms en los bordes.
"""

import logging
import math
from typing import Optional, Tuple

import librosa
import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import firwin, resample_poly
from scipy.signal.windows import hamming

from app.domain.audio import AudioConfig, MelFrames, PreprocessOutcome, Waveform
from app.domain.exceptions import EmptyInputError, UnsupportedSampleRateError, ValidationError

logger = logging.getLogger(__name__)

MIN_SAMPLE_RATE = 8000


def peak_normalize(w: Waveform) -> Waveform:
    peak = w.peak()
    if peak == 0.0:
        return w
    return Waveform(w.samples * (1.0 / peak), w.sample_rate)


def silence_bounds(w: Waveform, threshold_db: float = 60.0, hold_s: float = 0.01) -> Tuple[int, int]:
    """
    Primer y último+1 índice cuya envolvente supera pico·10^(-dB/20); (0, 0) si todo es silencio.
    La envolvente es |x| suavizado con un máximo deslizante centrado de `hold_s` segundos.
    """
    magnitude = np.abs(w.samples)
    peak = float(magnitude.max()) if w.num_samples else 0.0
    if peak == 0.0:
        return 0, 0
    envelope = maximum_filter1d(magnitude, size=max(1, int(round(hold_s * w.sample_rate))))
    active = np.flatnonzero(envelope >= peak * 10.0 ** (-threshold_db / 20.0))
    return int(active[0]), int(active[-1]) + 1


def trim_silence(w: Waveform, threshold_db: float = 60.0) -> Waveform:
    if w.num_samples == 0:
        raise EmptyInputError("trim_silence requiere una señal no vacía")
    start, stop = silence_bounds(w, threshold_db)
    return Waveform(w.samples[start:stop].copy(), w.sample_rate)


def sinc_kernel(up: int, down: int, zero_crossings: int = 32, beta: float = 8.0) -> np.ndarray:
    """
    Filtro paso bajo sinc con ventana Kaiser para `resample_poly`.

    El sinc abarca `zero_crossings` cruces por cero a cada lado del centro: medido
    en periodos de la frecuencia de corte son 2·zero_crossings taps, así que el
    valor por defecto (32) es el núcleo de 64 taps. Sobre la rejilla sobremuestreada
    el filtro tiene 2·zero_crossings·max(up, down) + 1 coeficientes y corta en la
    menor de las dos frecuencias de Nyquist.
    """
    max_rate = max(up, down)
    return firwin(2 * zero_crossings * max_rate + 1, 1.0 / max_rate, window=("kaiser", beta))


def resample(w: Waveform, target_rate: int = 32000, zero_crossings: int = 32,
             beta: float = 8.0) -> Waveform:
    """Remuestreo polifásico con sinc enventanado (Kaiser, núcleo de 64 taps por defecto)"""
    if w.sample_rate < MIN_SAMPLE_RATE:
        raise UnsupportedSampleRateError(
            f"frecuencia de muestreo {w.sample_rate} Hz por debajo de {MIN_SAMPLE_RATE} Hz"
        )
    if w.sample_rate == target_rate:
        return w
    common = math.gcd(w.sample_rate, target_rate)
    up, down = target_rate // common, w.sample_rate // common
    samples = resample_poly(w.samples, up, down, window=sinc_kernel(up, down, zero_crossings, beta))
    return Waveform(samples, target_rate)


def energy_segment_start(w: Waveform, target_duration: float, hop_s: float = 0.1) -> int:
    """Inicio (en muestras) de la ventana de máxima energía sobre la rejilla de `hop_s`"""
    window = int(round(target_duration * w.sample_rate))
    hop = max(1, int(round(hop_s * w.sample_rate)))
    if window >= w.num_samples:
        return 0
    cumulative = np.concatenate(([0.0], np.cumsum(w.samples ** 2)))
    starts = np.arange(0, w.num_samples - window + 1, hop)
    energies = cumulative[starts + window] - cumulative[starts]
    best = energies.max()
    # empates (hasta redondeo de la suma acumulada) se resuelven por el onset más temprano
    tolerance = 1e-9 * max(abs(best), np.finfo(np.float64).tiny)
    return int(starts[np.flatnonzero(energies >= best - tolerance)[0]])


def draw_target_duration(rng_seed: int, low: float = 15.0, high: float = 30.0) -> float:
    return float(np.random.default_rng(rng_seed).uniform(low, high))


def select_energy_segment(w: Waveform, target_duration: Optional[float] = None,
                          rng_seed: int = 0, hop_s: float = 0.1,
                          max_duration: float = 30.0) -> Waveform:
    if w.duration <= max_duration:
        return w
    if target_duration is None:
        target_duration = draw_target_duration(rng_seed)
    start = energy_segment_start(w, target_duration, hop_s)
    window = int(round(target_duration * w.sample_rate))
    return Waveform(w.samples[start:start + window].copy(), w.sample_rate)


def apply_edge_fade(w: Waveform, fade_duration: float = 0.016) -> Waveform:
    fade = int(round(fade_duration * w.sample_rate))
    if w.num_samples < 2 * fade:
        raise ValidationError(
            f"clip de {w.num_samples} muestras más corto que dos ventanas de fundido ({2 * fade})",
            field="fade_duration", value=fade_duration,
        )
    if fade == 0:
        return w
    window = hamming(2 * fade, sym=True)
    samples = w.samples.copy()
    samples[:fade] *= window[:fade]
    samples[-fade:] *= window[fade:]
    return Waveform(samples, w.sample_rate)


def mel_frontend(w: Waveform, hop: float = 0.02, mel_bins: int = 64, n_fft: int = 1024,
                 expected_rate: int = 32000) -> MelFrames:
    """Log-mel log(1 + energía) con T = ceil(n / (hop·sr)) frames"""
    if w.num_samples == 0:
        raise EmptyInputError("mel_frontend requiere una señal no vacía")
    if w.sample_rate != expected_rate:
        raise UnsupportedSampleRateError(
            f"el frontend espera {expected_rate} Hz, recibió {w.sample_rate} Hz"
        )
    hop_length = int(round(hop * w.sample_rate))
    frame_count = -(-w.num_samples // hop_length)
    power = np.abs(librosa.stft(w.samples, n_fft=n_fft, hop_length=hop_length,
                                window="hann", center=True)) ** 2
    filters = librosa.filters.mel(sr=w.sample_rate, n_fft=n_fft, n_mels=mel_bins)
    frames = np.log1p(filters @ power).T[:frame_count]
    return MelFrames(frames=np.ascontiguousarray(frames, dtype=np.float64), hop=hop)


def preprocess_clip(w: Waveform, cfg: AudioConfig = AudioConfig(), rng_seed: int = 0,
                    target_duration: Optional[float] = None) -> PreprocessOutcome:
    if w.num_samples == 0:
        return PreprocessOutcome("discarded", None, reason="vacío")
    if w.duration > cfg.max_input_duration_s:
        return PreprocessOutcome("discarded", None, reason=f"más de {cfg.max_input_duration_s} s")

    normalized = peak_normalize(w)
    start, stop = silence_bounds(normalized, cfg.threshold_db)
    if stop == 0:
        return PreprocessOutcome("discarded", None, reason="silencio")
    trimmed = Waveform(normalized.samples[start:stop].copy(), w.sample_rate)
    start_s = start / w.sample_rate
    if trimmed.duration < cfg.min_duration_s:
        return PreprocessOutcome("discarded", None, start_s=start_s,
                                 reason=f"{trimmed.duration:.3f} s tras recortar")

    resampled = resample(trimmed, cfg.target_rate, cfg.resampler_zero_crossings, cfg.resampler_beta)
    if resampled.duration > cfg.max_duration_s:
        if target_duration is None:
            target_duration = draw_target_duration(rng_seed, cfg.min_duration_s, cfg.max_duration_s)
        offset = energy_segment_start(resampled, target_duration, cfg.segment_hop_s)
        window = int(round(target_duration * resampled.sample_rate))
        resampled = Waveform(resampled.samples[offset:offset + window].copy(), resampled.sample_rate)
        start_s += offset / resampled.sample_rate

    faded = apply_edge_fade(resampled, cfg.fade_s)
    return PreprocessOutcome("kept", faded, start_s=start_s)
