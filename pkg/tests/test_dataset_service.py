import math

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from app.application.dataset_service import (
    coverage,
    dataset_stats,
    merge_intervals,
    merge_overlapping_regions,
    shift_regions,
    stratified_split,
    tokenize_caption,
    validate_against_ontology,
    vocabulary,
)
from app.domain.annotations import AnnotatedClip, Ontology, OntologyLeaf, Region
from app.domain.exceptions import EmptyInputError, ValidationError


def _clip(clip_id, duration, spans, subclass="s"):
    regions = tuple(Region(onset=a, offset=b, text=f"event {i}") for i, (a, b) in enumerate(spans))
    return AnnotatedClip(clip_id=clip_id, duration=duration, subclass=subclass, regions=regions)


class TestRegionInvariants:
    def test_offset_equal_onset_rejected(self):
        with pytest.raises(PydanticValidationError):
            Region(onset=1.0, offset=1.0, text="a dog barks")

    def test_blank_text_rejected(self):
        with pytest.raises(PydanticValidationError):
            Region(onset=0.0, offset=1.0, text="   ")

    def test_offset_may_overshoot_by_one_frame(self):
        _clip("c", 20.0, [(0.0, 20.01)])
        with pytest.raises(PydanticValidationError):
            _clip("c", 20.0, [(0.0, 20.05)])

    def test_processed_duration_bound_only_with_context(self):
        raw = {"clip_id": "long", "duration": 120.0}
        AnnotatedClip.model_validate(raw)
        with pytest.raises(PydanticValidationError):
            AnnotatedClip.model_validate(raw, context={"processed": True})


class TestMerge:
    def test_overlapping(self):
        assert merge_intervals([(0, 2), (1, 3)]) == [(0.0, 3.0)]

    def test_touching(self):
        assert merge_intervals([(0, 1), (1, 2)]) == [(0.0, 2.0)]

    def test_empty(self):
        assert merge_intervals([]) == []

    def test_matches_millisecond_raster(self):
        rng = np.random.default_rng(0)
        horizon = 30_000
        for _ in range(1000):
            count = int(rng.integers(1, 12))
            starts = rng.integers(0, horizon - 1, size=count)
            lengths = rng.integers(1, 4000, size=count)
            ms = [(int(a), int(min(a + n, horizon))) for a, n in zip(starts, lengths)]

            brute = np.zeros(horizon, dtype=bool)
            for a, b in ms:
                brute[a:b] = True

            merged = merge_intervals([(a / 1000, b / 1000) for a, b in ms])
            raster = np.zeros(horizon, dtype=bool)
            for a, b in merged:
                raster[int(round(a * 1000)):int(round(b * 1000))] = True

            assert np.array_equal(raster, brute)
            assert len(merged) <= len(ms)
            assert all(b1 < a2 for (_, b1), (a2, _) in zip(merged, merged[1:]))

    def test_permutation_invariant(self):
        regions = [Region(onset=a, offset=b, text="x") for a, b in [(5, 7), (0, 2), (1, 3), (6, 9)]]
        assert merge_overlapping_regions(regions) == merge_overlapping_regions(regions[::-1])


class TestCoverage:
    def test_full(self):
        assert coverage(_clip("c", 20.0, [(0, 10), (5, 20)])) == 1.0

    def test_quarter(self):
        assert coverage(_clip("c", 20.0, [(0, 5)])) == pytest.approx(0.25)

    def test_split_region_invariant(self):
        whole = _clip("c", 20.0, [(2, 9)])
        halves = _clip("c", 20.0, [(2, 4.5), (4.5, 9)])
        assert coverage(whole) == pytest.approx(coverage(halves), abs=1e-12)

    def test_two_annotators_cover_train_clip(self, train_clip):
        assert coverage(train_clip) == pytest.approx(1.0, abs=0.01)


class TestStats:
    def test_small_example(self):
        clip = AnnotatedClip(clip_id="c", duration=20.0, regions=(
            Region(onset=0, offset=1, text="a b"), Region(onset=1, offset=3, text="a b c")))
        report = dataset_stats([clip])
        assert report.region_count == 2
        assert report.caption_words_mean == pytest.approx(2.5)
        assert report.vocabulary_size == 3
        assert report.duration_histogram[1] == 1
        assert report.duration_histogram[2] == 1

    def test_duplicate_annotations_counted(self, train_clip):
        report = dataset_stats([train_clip])
        assert report.duplicate_annotated_clips == 1
        assert report.regions_per_clip == 5

    def test_permutation_invariant(self):
        clips = [_clip(f"c{i}", 15.0 + i, [(0, 1 + i)]) for i in range(5)]
        assert dataset_stats(clips) == dataset_stats(clips[::-1])

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            dataset_stats([])

    def test_tokenizer(self):
        assert tokenize_caption("A Train, going  by!") == ["a", "train", "going", "by"]
        assert vocabulary(["the dog barks"], remove_stop_words=True) == {"dog", "barks"}


class TestStratifiedSplit:
    def test_equal_subclasses(self):
        clips = [_clip(f"{s}{i}", 20.0, [], subclass=s) for s in "ab" for i in range(50)]
        split = stratified_split(clips, 0.2, seed=1)
        assert len(split.test_ids) == 20
        assert sum(1 for cid in split.test_ids if cid.startswith("a")) == 10
        assert split.train_ids | split.test_ids == {c.clip_id for c in clips}

    def test_deterministic(self):
        clips = [_clip(f"{s}{i}", 20.0, [], subclass=s) for s in "abc" for i in range(17)]
        assert stratified_split(clips, 0.3, seed=5) == stratified_split(clips, 0.3, seed=5)

    def test_many_subclasses_within_one_clip(self):
        rng = np.random.default_rng(2)
        clips = []
        for s in range(59):
            clips += [_clip(f"s{s}_{i}", 20.0, [], subclass=f"s{s}") for i in range(int(rng.integers(20, 400)))]
        fraction = 2000 / 12358
        split = stratified_split(clips, fraction, seed=0)
        assert len(split.test_ids) == math.floor(len(clips) * fraction + 0.5)
        for s in range(59):
            members = [c.clip_id for c in clips if c.subclass == f"s{s}"]
            tested = sum(1 for cid in members if cid in split.test_ids)
            assert abs(tested - len(members) * fraction) <= 1

    def test_missing_subclass_rejected(self):
        with pytest.raises(ValidationError):
            stratified_split([_clip("c", 20.0, [], subclass=None)], 0.5, seed=0)

    def test_empty_ontology_subclass_warns(self):
        ontology = Ontology(superclasses=("root",), subclasses=(
            OntologyLeaf(name="a", parent="root"), OntologyLeaf(name="ghost", parent="root")))
        clips = [_clip(f"a{i}", 20.0, [], subclass="a") for i in range(10)]
        split = stratified_split(clips, 0.2, seed=0, ontology=ontology)
        assert len(split.warnings) == 1 and "ghost" in split.warnings[0]


def test_validate_against_ontology():
    ontology = Ontology(superclasses=("root",), subclasses=(OntologyLeaf(name="a", parent="root"),))
    issues = validate_against_ontology([_clip("x", 20.0, [], subclass="b")], ontology)
    assert [issue.clip_id for issue in issues] == ["x"]


def test_ontology_rejects_orphans():
    with pytest.raises(PydanticValidationError):
        Ontology(superclasses=("root",), subclasses=(OntologyLeaf(name="a", parent="nowhere"),))


def test_shift_regions_clips_to_window():
    regions = [Region(onset=1.0, offset=4.0, text="x"), Region(onset=40.0, offset=41.0, text="y")]
    shifted = shift_regions(regions, start_s=2.0, duration=20.0)
    assert [(r.onset, r.offset) for r in shifted] == [(0.0, 2.0)]
