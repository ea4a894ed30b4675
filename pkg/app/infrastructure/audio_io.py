import logging
from pathlib import Path

import numpy as np
import soundfile as sf

from app.domain.audio import Waveform
from app.domain.exceptions import ValidationError

logger = logging.getLogger(__name__)


def read_wav(path: Path) -> Waveform:
    """WAV PCM o float; el estéreo se mezcla a mono promediando canales"""
    try:
        samples, sample_rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise ValidationError(f"no se pudo leer el audio: {e}", field="audio_path", value=str(path)) from e
    if samples.shape[1] > 1:
        logger.debug("Mezclando %s canales a mono: %s", samples.shape[1], path)
    return Waveform(samples.mean(axis=1), int(sample_rate))


def write_wav(path: Path, waveform: Waveform, subtype: str = "PCM_16") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(waveform.samples, -1.0, 1.0), waveform.sample_rate, subtype=subtype)
