import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from app.application.synth import SYNTH_CLASSES, _place_events, render_event, synth_clip, synth_generate
from app.domain.synth import SynthSpec
from app.infrastructure.event_io import read_class_descriptions, read_events
from app.infrastructure.repositories_impl.manifest_repository import JsonlManifestRepository, load_ontology

SMALL = SynthSpec(class_count=3, clips_per_class=2, sample_rate=8000, seed=11)
OUTPUTS = ("manifest.jsonl", "ground_truth.tsv", "classes.tsv", "ontology.yaml")


def _centroid(signal, sr):
    spectrum = np.abs(np.fft.rfft(signal)) ** 2
    freqs = np.fft.rfftfreq(len(signal), 1.0 / sr)
    return float(np.sum(freqs * spectrum) / np.sum(spectrum))


def test_clip_is_deterministic():
    first, second = synth_clip(SMALL, 1, 0), synth_clip(SMALL, 1, 0)
    assert first.clip == second.clip
    np.testing.assert_array_equal(first.waveform.samples, second.waveform.samples)
    assert synth_clip(SMALL, 1, 1).clip != first.clip


def test_events_fit_inside_clip():
    for class_index in range(SMALL.class_count):
        for clip_index in range(SMALL.clips_per_class):
            item = synth_clip(SMALL, class_index, clip_index)
            clip = item.clip
            assert 15.0 <= clip.duration <= 30.0
            assert item.events[0].label == SYNTH_CLASSES[class_index].name
            spans = [(r.onset, r.offset) for r in clip.regions]
            assert spans == sorted(spans)
            assert all(0.0 <= a < b <= clip.duration for a, b in spans)
            assert all(b1 <= a2 for (_, b1), (a2, _) in zip(spans, spans[1:]))
            assert all(abs(x * 1000 - round(x * 1000)) < 1e-6 for span in spans for x in span)
            assert item.waveform.num_samples == round(clip.duration * SMALL.sample_rate)


def test_placement_on_millisecond_grid():
    rng = np.random.default_rng(12)
    for _ in range(2000):
        duration = round(float(rng.uniform(15.0, 30.0)), 3)
        lengths = np.round(rng.uniform(0.001, 3.0, size=int(rng.integers(1, 6))), 3)
        spans = _place_events(duration, lengths, rng)
        ms = [(round(a * 1000), round(b * 1000)) for a, b in spans]
        assert all(a == pytest.approx(on / 1000.0, abs=1e-12) and b == pytest.approx(off / 1000.0, abs=1e-12)
                   for (a, b), (on, off) in zip(spans, ms))
        assert all(off - on == round(length * 1000) for (on, off), length in zip(ms, lengths))
        assert all(off1 <= on2 for (_, off1), (on2, _) in zip(ms, ms[1:]))
        assert all(b1 <= a2 for (_, b1), (a2, _) in zip(spans, spans[1:]))
        assert ms[-1][1] <= round(duration * 1000)


def test_generate_writes_identical_files(tmp_path):
    corpus = synth_generate(SMALL, tmp_path / "a")
    synth_generate(SMALL, tmp_path / "b")
    names = list(OUTPUTS) + [clip.audio_path for clip in corpus.clips]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_generated_files_load_back(tmp_path):
    corpus = synth_generate(SMALL, tmp_path)
    assert JsonlManifestRepository().load(tmp_path / "manifest.jsonl") == list(corpus.clips)
    assert read_events(tmp_path / "ground_truth.tsv") == corpus.truth
    assert read_class_descriptions(tmp_path / "classes.tsv") == corpus.descriptions
    assert load_ontology(tmp_path / "ontology.yaml") == corpus.ontology
    assert len(corpus.clips) == 6 and len(corpus.truth) == 12


def test_weak_caption_lists_regions_in_order():
    clip = synth_clip(SMALL, 0, 0).clip
    assert clip.weak_caption == " ".join(r.text for r in clip.regions_by_onset())


def test_class_templates_are_spectrally_separated():
    rng = np.random.default_rng(0)
    centroids = [_centroid(render_event(cls.name, 32000, 32000, rng), 32000) for cls in SYNTH_CLASSES]
    assert centroids == sorted(centroids)
    assert min(b - a for a, b in zip(centroids, centroids[1:])) > 300.0


def test_event_peak_and_ramps():
    signal = render_event("low_tone", 8000, 32000, np.random.default_rng(0))
    assert np.max(np.abs(signal)) <= 0.5 + 1e-12
    assert signal[0] == 0.0


def test_events_must_fit():
    with pytest.raises(PydanticValidationError):
        SynthSpec(events_per_clip=5, event_duration=(1.0, 4.0))
    with pytest.raises(PydanticValidationError):
        SynthSpec(class_count=6)
