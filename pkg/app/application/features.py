"""
Carga de clips procesados como features log-mel listas para entrenar o evaluar.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence

from app.application.audio_pipeline import mel_frontend
from app.application.captions import weak_caption_payload
from app.domain.annotations import AnnotatedClip
from app.domain.audio import AudioConfig, MelFrames
from app.domain.exceptions import ValidationError
from app.domain.training import LossKind, TrainingExample
from app.infrastructure.audio_io import read_wav

logger = logging.getLogger(__name__)


def clip_mel(clip: AnnotatedClip, audio_root: Path, cfg: AudioConfig = AudioConfig()) -> MelFrames:
    if not clip.audio_path:
        raise ValidationError("el clip no tiene audio_path", field="audio_path", clip_id=clip.clip_id)
    waveform = read_wav(Path(audio_root) / clip.audio_path)
    return mel_frontend(waveform, cfg.hop_s, cfg.mel_bins, cfg.n_fft, expected_rate=cfg.target_rate)


def load_mels(clips: Sequence[AnnotatedClip], audio_root: Path,
              cfg: AudioConfig = AudioConfig()) -> Dict[str, MelFrames]:
    mels = {clip.clip_id: clip_mel(clip, audio_root, cfg) for clip in clips}
    logger.info("✅ Features log-mel calculadas para %s clips", len(mels))
    return mels


def training_examples(clips: Sequence[AnnotatedClip], mels: Dict[str, MelFrames],
                      loss_kind: LossKind = LossKind.FRAME_WISE) -> List[TrainingExample]:
    """
    Empareja clips y features. Para la pérdida global el caption débil que
    falte se sustituye por las regiones concatenadas en orden de onset; los
    clips sin texto alguno se omiten.
    """
    examples, skipped = [], []
    for clip in clips:
        weak = clip.weak_caption or (weak_caption_payload(clip.regions) if clip.regions else "")
        needs_text = clip.regions if LossKind(loss_kind) is LossKind.FRAME_WISE else weak
        if not needs_text:
            skipped.append(clip.clip_id)
            continue
        examples.append(TrainingExample(clip_id=clip.clip_id, mel=mels[clip.clip_id],
                                        regions=tuple(clip.regions_by_onset()), weak_caption=weak,
                                        subclass=clip.subclass))
    if skipped:
        logger.warning("⚠️ %s clips sin texto para la pérdida %s: %s", len(skipped),
                       LossKind(loss_kind).value, skipped[:5])
    return examples
