import json

import numpy as np
import pytest

from app.application.encoders import init_params
from app.domain.annotations import AnnotatedClip, DatasetSplit, Ontology, OntologyLeaf
from app.domain.audio import Waveform
from app.domain.detection import Event, EventList
from app.domain.embeddings import PARAM_NAMES
from app.domain.exceptions import ConfigError, ManifestParseError, ManifestValidationError, ValidationError
from app.infrastructure.audio_io import read_wav, write_wav
from app.infrastructure.event_io import (
    read_class_descriptions,
    read_events,
    write_class_descriptions,
    write_events,
)
from app.infrastructure.repositories_impl.checkpoint_store import CheckpointStore, RunCheckpoints
from app.infrastructure.repositories_impl.manifest_repository import (
    JsonlManifestRepository,
    format_seconds,
    load_ontology,
    load_split,
    save_ontology,
    save_split,
)


def _record(**overrides):
    record = {"clip_id": "c1", "audio_path": "audio/c1.wav", "duration_s": 20.0, "subclass": "dog",
              "weak_caption": None,
              "regions": [{"onset_s": 0.5, "offset_s": 2.0, "text": "A dog barks.", "annotator": "A"}]}
    record.update(overrides)
    return json.dumps(record)


class TestManifest:
    def test_round_trip(self, tmp_path, train_clip):
        repo = JsonlManifestRepository()
        other = AnnotatedClip(clip_id="empty", duration=15.0, subclass="rail")
        repo.save(tmp_path / "m.jsonl", [train_clip, other])
        assert repo.load(tmp_path / "m.jsonl") == [train_clip, other]

    def test_seconds_keep_three_decimals(self, train_clip):
        line = JsonlManifestRepository.dumps(train_clip)
        assert '"onset_s": 0.000' in line
        assert '"duration_s": 20.848' in line
        assert format_seconds(2.5) == "2.500"
        assert format_seconds(0.1234567) == "0.1234567"

    def test_offset_equal_onset_reports_record(self, tmp_path):
        bad = _record(clip_id="c2", regions=[{"onset_s": 1.0, "offset_s": 1.0, "text": "x"}])
        (tmp_path / "m.jsonl").write_text(_record() + "\n\n" + bad + "\n", encoding="utf-8")
        with pytest.raises(ManifestValidationError) as info:
            JsonlManifestRepository().load(tmp_path / "m.jsonl")
        issue = info.value.issues[0]
        assert issue.record_index == 1 and issue.clip_id == "c2"
        assert "regions" in issue.field

    def test_malformed_line(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(_record() + "\n{not json\n", encoding="utf-8")
        with pytest.raises(ManifestParseError) as info:
            JsonlManifestRepository().load(tmp_path / "m.jsonl")
        assert info.value.record_index == 1

    def test_missing_duration(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(json.dumps({"clip_id": "c"}) + "\n", encoding="utf-8")
        with pytest.raises(ManifestParseError):
            JsonlManifestRepository().load(tmp_path / "m.jsonl")

    def test_raw_manifest_skips_processed_bound(self, tmp_path):
        (tmp_path / "m.jsonl").write_text(_record(duration_s=120.0) + "\n", encoding="utf-8")
        repo = JsonlManifestRepository()
        assert repo.load(tmp_path / "m.jsonl", processed=False)[0].duration == 120.0
        with pytest.raises(ManifestValidationError):
            repo.load(tmp_path / "m.jsonl")


class TestSplitAndOntology:
    def test_split_round_trip(self, tmp_path):
        split = DatasetSplit(train_ids=frozenset({"a", "b"}), test_ids=frozenset({"c"}), warnings=("w",))
        save_split(tmp_path / "split.json", split)
        assert load_split(tmp_path / "split.json") == split

    def test_invalid_split(self, tmp_path):
        (tmp_path / "split.json").write_text("[]", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_split(tmp_path / "split.json")

    def test_ontology_round_trip(self, tmp_path):
        ontology = Ontology(superclasses=("animals",), subclasses=(OntologyLeaf(name="dog", parent="animals"),))
        save_ontology(tmp_path / "o.yaml", ontology)
        assert load_ontology(tmp_path / "o.yaml") == ontology

    def test_ontology_as_list(self, tmp_path):
        (tmp_path / "o.yaml").write_text(
            "superclasses: [animals]\nsubclasses:\n  - {name: dog, parent: animals}\n", encoding="utf-8")
        assert load_ontology(tmp_path / "o.yaml").parent_of() == {"dog": "animals"}

    def test_orphan_ontology(self, tmp_path):
        (tmp_path / "o.yaml").write_text("superclasses: [a]\nsubclasses: {dog: b}\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_ontology(tmp_path / "o.yaml")


class TestCheckpoints:
    def test_encode_decode_is_bit_exact(self, tiny_model):
        store = CheckpointStore()
        params = init_params(tiny_model)
        blob = store.encode(params, {"note": "x"})
        decoded, metadata = store.decode(blob)
        assert metadata == {"note": "x"}
        assert decoded.config == tiny_model
        assert store.encode(decoded, metadata) == blob

    def test_header_is_readable(self, tiny_model):
        blob = CheckpointStore().encode(init_params(tiny_model))
        header = blob[:blob.index(b"\nend\n")].decode("utf-8").splitlines()
        assert header[0] == "STRONGCAP-CKPT 1"
        assert "tensor audio_proj 3,5" in header

    def test_payload_is_little_endian_float32(self, tiny_model):
        params = init_params(tiny_model)
        blob = CheckpointStore().encode(params)
        payload = blob[blob.index(b"\nend\n") + len(b"\nend\n"):]
        assert len(payload) == 4 * sum(params[name].size for name in PARAM_NAMES)
        first = params[PARAM_NAMES[0]]
        np.testing.assert_array_equal(np.frombuffer(payload[:4 * first.size], dtype="<f4"),
                                      first.astype(np.float32).ravel())
        decoded, _ = CheckpointStore().decode(blob)
        assert decoded[PARAM_NAMES[0]].dtype == np.float64
        np.testing.assert_array_equal(decoded[PARAM_NAMES[0]], first.astype(np.float32).astype(np.float64))

    def test_truncated(self, tiny_model):
        blob = CheckpointStore().encode(init_params(tiny_model))
        with pytest.raises(ValidationError):
            CheckpointStore().decode(blob[:-4])

    def test_not_a_checkpoint(self):
        with pytest.raises(ValidationError):
            CheckpointStore().decode(b"hello\nend\n")

    def test_run_checkpoints_paths(self, tmp_path, tiny_model):
        run = RunCheckpoints(tmp_path, metadata={"run": "r1"})
        params = init_params(tiny_model)
        assert run.save_epoch(3, params).name == "epoch_003.ckpt"
        _, metadata = CheckpointStore().load(run.save_best(params, {"epoch": "3"}))
        assert metadata == {"epoch": "3", "run": "r1"}


class TestEventFiles:
    def test_round_trip(self, tmp_path):
        events = EventList((Event("c1", "dog", 0.5, 2.0), Event("c2", "car", 1.25, 3.0)), role="ground_truth")
        write_events(tmp_path / "gt.tsv", events)
        assert read_events(tmp_path / "gt.tsv") == events

    def test_headerless(self, tmp_path):
        (tmp_path / "gt.tsv").write_text("c1\t0.5\t2.0\tdog\n", encoding="utf-8")
        assert read_events(tmp_path / "gt.tsv").events == (Event("c1", "dog", 0.5, 2.0),)

    def test_empty_file(self, tmp_path):
        (tmp_path / "gt.tsv").write_text("", encoding="utf-8")
        assert len(read_events(tmp_path / "gt.tsv")) == 0

    def test_bad_times(self, tmp_path):
        (tmp_path / "gt.tsv").write_text("c1\t2.0\t1.0\tdog\n", encoding="utf-8")
        with pytest.raises(ManifestParseError):
            read_events(tmp_path / "gt.tsv")

    def test_class_descriptions(self, tmp_path):
        write_class_descriptions(tmp_path / "classes.tsv", {"insect_buzz": "Insects are buzzing."})
        assert read_class_descriptions(tmp_path / "classes.tsv") == {"insect_buzz": "Insects are buzzing."}


class TestWav:
    def test_round_trip_pcm16(self, tmp_path):
        samples = 0.5 * np.sin(np.linspace(0, 40 * np.pi, 8000))
        write_wav(tmp_path / "nested" / "a.wav", Waveform(samples, 16000))
        back = read_wav(tmp_path / "nested" / "a.wav")
        assert back.sample_rate == 16000
        np.testing.assert_allclose(back.samples, samples, atol=1e-4)

    def test_unreadable(self, tmp_path):
        (tmp_path / "x.wav").write_bytes(b"not audio")
        with pytest.raises(ValidationError):
            read_wav(tmp_path / "x.wav")
