"""
Corpus sintético de referencia: cada clase es una plantilla acústica distinta
(tono grave, tono modulado en amplitud, chirp ascendente, ráfaga de ruido en
banda, tren de clics) colocada sobre un suelo de ruido blanco.

Los eventos de un clip no se solapan; el primero es de la subclase del clip y
el resto de clases al azar. Todo es determinista dada la semilla.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np
from scipy.signal import butter, chirp, sosfilt

from app.application.captions import weak_caption_payload
from app.domain.annotations import AnnotatedClip, Ontology, OntologyLeaf, Region
from app.domain.audio import Waveform
from app.domain.detection import Event, EventList
from app.domain.synth import SynthClass, SynthClip, SynthCorpus, SynthSpec
from app.infrastructure.audio_io import write_wav
from app.infrastructure.event_io import write_class_descriptions, write_events
from app.infrastructure.repositories_impl.manifest_repository import JsonlManifestRepository, save_ontology

logger = logging.getLogger(__name__)

EVENT_PEAK = 0.5
RAMP_S = 0.01
SUPERCLASS = "synthetic"
ANNOTATOR = "synth"

SYNTH_CLASSES = (
    SynthClass("low_tone", ("a low tone sounds", "a low tone hums steadily"), "A low tone hums."),
    SynthClass("pulsing_beep", ("a pulsing beep warbles", "a beep pulses and warbles"),
               "A pulsing beep warbles."),
    SynthClass("rising_chirp", ("a rising chirp sweeps upward", "a chirp rises and sweeps"),
               "A chirp sweeps upward."),
    SynthClass("noise_burst", ("a burst of hissing noise", "hissing noise bursts out"),
               "Hissing noise bursts."),
    SynthClass("click_train", ("a rapid train of clicks", "clicks rattle rapidly"), "Rapid clicks rattle."),
)


def _low_tone(t: np.ndarray, sr: int, rng: np.random.Generator) -> np.ndarray:
    return np.sin(2 * np.pi * 440.0 * t) + 0.3 * np.sin(2 * np.pi * 880.0 * t)


def _pulsing_beep(t: np.ndarray, sr: int, rng: np.random.Generator) -> np.ndarray:
    return (0.5 + 0.5 * np.sin(2 * np.pi * 8.0 * t)) * np.sin(2 * np.pi * 1000.0 * t)


def _rising_chirp(t: np.ndarray, sr: int, rng: np.random.Generator) -> np.ndarray:
    return chirp(t, f0=2000.0, t1=max(float(t[-1]), 1.0 / sr), f1=3000.0)


def _noise_burst(t: np.ndarray, sr: int, rng: np.random.Generator) -> np.ndarray:
    sos = butter(4, [4000.0, 6000.0], btype="bandpass", fs=sr, output="sos")
    return sosfilt(sos, rng.standard_normal(t.shape[0]))


def _click_train(t: np.ndarray, sr: int, rng: np.random.Generator) -> np.ndarray:
    phase = np.mod(t, 0.025)
    return np.exp(-phase / 0.0005) * np.sin(2 * np.pi * 9000.0 * phase)


TEMPLATES: Dict[str, Callable[[np.ndarray, int, np.random.Generator], np.ndarray]] = {
    "low_tone": _low_tone,
    "pulsing_beep": _pulsing_beep,
    "rising_chirp": _rising_chirp,
    "noise_burst": _noise_burst,
    "click_train": _click_train,
}


def render_event(name: str, samples: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    """Plantilla de la clase con pico EVENT_PEAK y rampas de 10 ms"""
    t = np.arange(samples) / sr
    signal = TEMPLATES[name](t, sr, rng)
    signal = EVENT_PEAK * signal / max(float(np.max(np.abs(signal))), 1e-12)
    ramp = min(int(RAMP_S * sr), samples // 2)
    if ramp > 0:
        rise = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        signal[:ramp] *= rise
        signal[-ramp:] *= rise[::-1]
    return signal


def _place_events(duration: float, event_durations: np.ndarray, rng: np.random.Generator) -> List[tuple]:
    """Spans sin solape con huecos aleatorios; onset y offset sobre la rejilla de 1 ms"""
    total_ms = int(round(duration * 1000.0))
    lengths_ms = [int(round(float(length) * 1000.0)) for length in event_durations]
    free_ms = max(total_ms - sum(lengths_ms), 0)
    gaps = rng.dirichlet(np.ones(len(lengths_ms) + 1)) * free_ms
    spans, cursor = [], 0
    for gap, length in zip(gaps[:-1], lengths_ms):
        onset = cursor + int(np.floor(gap))
        offset = min(onset + length, total_ms)
        spans.append((onset / 1000.0, offset / 1000.0))
        cursor = offset
    return spans


def synth_clip(spec: SynthSpec, class_index: int, clip_index: int) -> SynthClip:
    rng = np.random.default_rng([spec.seed, class_index, clip_index])
    classes = SYNTH_CLASSES[:spec.class_count]
    sr = spec.sample_rate
    own = classes[class_index]

    duration = round(float(rng.uniform(*spec.clip_duration)), 3)
    samples = int(round(duration * sr))
    noise_std = EVENT_PEAK * 10.0 ** (spec.noise_floor_db / 20.0)
    audio = noise_std * rng.standard_normal(samples)

    lengths = np.round(rng.uniform(*spec.event_duration, size=spec.events_per_clip), 3)
    labels = [class_index] + [int(c) for c in rng.integers(len(classes), size=spec.events_per_clip - 1)]
    clip_id = f"{own.name}_{clip_index:03d}"

    regions, events = [], []
    for (onset, offset), label in zip(_place_events(duration, lengths, rng), labels):
        cls = classes[label]
        start, stop = int(round(onset * sr)), min(int(round(offset * sr)), samples)
        audio[start:stop] += render_event(cls.name, stop - start, sr, rng)
        caption = cls.captions[int(rng.integers(len(cls.captions)))]
        regions.append(Region(onset=onset, offset=offset, text=caption, annotator_id=ANNOTATOR))
        events.append(Event(clip_id, cls.name, onset, offset))

    clip = AnnotatedClip(clip_id=clip_id, duration=duration, subclass=own.name,
                         audio_path=f"audio/{clip_id}.wav", weak_caption=weak_caption_payload(regions),
                         regions=tuple(regions))
    return SynthClip(clip=clip, waveform=Waveform(audio, sr), events=tuple(events))


def iter_synth_clips(spec: SynthSpec) -> Iterator[SynthClip]:
    """Genera los clips uno a uno, clase por clase"""
    for class_index in range(spec.class_count):
        for clip_index in range(spec.clips_per_class):
            yield synth_clip(spec, class_index, clip_index)


def synth_classes(spec: SynthSpec) -> Dict[str, str]:
    """Nombre de clase → descripción de una frase"""
    return {cls.name: cls.description for cls in SYNTH_CLASSES[:spec.class_count]}


def synth_ontology(spec: SynthSpec) -> Ontology:
    return Ontology(superclasses=(SUPERCLASS,),
                    subclasses=tuple(OntologyLeaf(name=name, parent=SUPERCLASS) for name in synth_classes(spec)))


def synth_generate(spec: SynthSpec, out_dir: Path,
                   manifest_repo: Optional[JsonlManifestRepository] = None) -> SynthCorpus:
    """
    Escribe en `out_dir`: audio/<clip_id>.wav, manifest.jsonl, ground_truth.tsv,
    classes.tsv y ontology.yaml.
    """
    out_dir = Path(out_dir)
    manifest_repo = manifest_repo or JsonlManifestRepository()
    clips, events = [], []
    for item in iter_synth_clips(spec):
        write_wav(out_dir / item.clip.audio_path, item.waveform)
        clips.append(item.clip)
        events.extend(item.events)

    truth = EventList(tuple(events), role="ground_truth")
    descriptions = synth_classes(spec)
    ontology = synth_ontology(spec)
    manifest_repo.save(out_dir / "manifest.jsonl", clips)
    write_events(out_dir / "ground_truth.tsv", truth)
    write_class_descriptions(out_dir / "classes.tsv", descriptions)
    save_ontology(out_dir / "ontology.yaml", ontology)

    logger.info("✅ Corpus sintético: %s clips, %s eventos, %s clases en %s",
                len(clips), len(events), len(descriptions), out_dir)
    return SynthCorpus(clips=tuple(clips), truth=truth, descriptions=descriptions, ontology=ontology)
