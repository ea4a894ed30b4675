import math

import numpy as np
import pytest

from app.application.encoders import init_params
from app.application.objectives import (
    frame_posterior,
    frame_similarity,
    frame_wise_loss,
    global_clap_loss,
    loss_and_gradient,
    region_to_frames,
)
from app.domain.annotations import Region
from app.domain.embeddings import PARAM_NAMES, BatchAssembly, FrameSpan
from app.domain.exceptions import EmptyInputError, InvalidBatchError, ShapeMismatchError, ValidationError
from app.domain.training import LossKind, TrainingExample


def _unit_rows(rng, rows, dim):
    x = rng.normal(size=(rows, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _random_batch(rng, temperature=0.1):
    dim = int(rng.integers(2, 6))
    clips, regions = [], []
    for _ in range(int(rng.integers(2, 5))):
        frames = int(rng.integers(1, 12))
        clips.append(_unit_rows(rng, frames, dim))
        per_clip = []
        for _ in range(int(rng.integers(0, 4))):
            t_on = int(rng.integers(0, frames))
            t_off = int(rng.integers(t_on + 1, frames + 1))
            per_clip.append((FrameSpan(t_on, t_off), _unit_rows(rng, 1, dim)[0]))
        regions.append(per_clip)
    if not any(regions):
        regions[0].append((FrameSpan(0, 1), _unit_rows(rng, 1, dim)[0]))
    return BatchAssembly(clips, regions, temperature)


def _scalar_loss(batch):
    """Pérdida frame-wise con bucles escalares en precisión extendida"""
    tau = np.longdouble(batch.temperature)
    total, count = np.longdouble(0), 0
    for i, (frames, regions) in enumerate(zip(batch.clips, batch.regions)):
        negatives = [text for j, other in enumerate(batch.regions) if j != i for _, text in other]
        for span, positive in regions:
            count += 1
            region_sum = np.longdouble(0)
            for t in range(span.t_on, span.t_off):
                a = frames[t].astype(np.longdouble)
                pos = np.exp(np.dot(a, positive.astype(np.longdouble)) / tau)
                denominator = pos
                for neg in negatives:
                    denominator += np.exp(np.dot(a, neg.astype(np.longdouble)) / tau)
                region_sum += np.log(pos / denominator)
            total -= region_sum / span.length
    return total / count


class TestRegionToFrames:
    def test_annotation_example(self):
        assert region_to_frames(2.624, 20.848, 0.02, 1043) == FrameSpan(131, 1043)

    def test_exact_multiples_do_not_spill(self):
        assert region_to_frames(0.2, 0.4, 0.02, 100) == FrameSpan(10, 20)

    def test_sub_frame_region_gets_one_frame(self):
        span = region_to_frames(0.301, 0.302, 0.02, 100)
        assert span.length == 1 and span.t_on == 15

    def test_clamped_to_clip(self):
        assert region_to_frames(19.0, 20.01, 0.02, 1000) == FrameSpan(950, 1000)

    def test_empty_interval_rejected(self):
        with pytest.raises(ValidationError):
            region_to_frames(1.0, 1.0, 0.02, 100)

    def test_random_spans_cover_region(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            delta = float(rng.choice([0.01, 0.02, 0.04]))
            frames = int(rng.integers(1, 1500))
            onset = float(rng.uniform(0, frames * delta))
            offset = float(rng.uniform(onset + 1e-6, frames * delta + delta))
            span = region_to_frames(onset, offset, delta, frames)
            assert 0 <= span.t_on < span.t_off <= frames
            assert span.length <= math.ceil((offset - onset) / delta) + 1
            if offset - onset >= delta:
                assert span.t_on * delta <= onset + 1e-9
                assert span.t_off * delta >= min(offset, frames * delta) - 1e-9


class TestFrameWiseLoss:
    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            batch = _random_batch(rng, temperature=float(rng.choice([0.05, 0.1, 0.3])))
            loss, _ = frame_wise_loss(batch)
            assert abs(loss - float(_scalar_loss(batch))) < 1e-9

    def test_identical_negative_gives_ln2(self):
        d = np.array([0.6, 0.8])
        frames = np.tile(np.array([1.0, 0.0]), (4, 1))
        batch = BatchAssembly([frames, frames.copy()],
                              [[(FrameSpan(0, 4), d)], [(FrameSpan(1, 3), d)]], 0.1)
        loss, _ = frame_wise_loss(batch)
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_no_negatives_gives_zero(self):
        rng = np.random.default_rng(2)
        batch = BatchAssembly([_unit_rows(rng, 3, 3), _unit_rows(rng, 2, 3)],
                              [[(FrameSpan(0, 3), np.array([1.0, 0.0, 0.0]))], []], 0.1)
        loss, grads = frame_wise_loss(batch)
        assert loss == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(grads.frames[0], 0.0)

    def test_empty_batch_rejected(self):
        with pytest.raises(EmptyInputError):
            frame_wise_loss(BatchAssembly([np.eye(2), np.eye(2)], [[], []], 0.1))

    def test_single_clip_batch_rejected(self):
        frames = _unit_rows(np.random.default_rng(7), 3, 3)
        with pytest.raises(InvalidBatchError):
            frame_wise_loss(BatchAssembly([frames], [[(FrameSpan(0, 3), frames[0])]], 0.1))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        batch = _random_batch(rng)
        _, grads = frame_wise_loss(batch)
        h = 1e-6
        for i, frames in enumerate(batch.clips):
            for idx in np.ndindex(frames.shape):
                original = frames[idx]
                frames[idx] = original + h
                plus, _ = frame_wise_loss(batch)
                frames[idx] = original - h
                minus, _ = frame_wise_loss(batch)
                frames[idx] = original
                assert (plus - minus) / (2 * h) == pytest.approx(grads.frames[i][idx], abs=1e-6)

    def test_posterior_between_zero_and_one(self):
        rng = np.random.default_rng(4)
        rows = _unit_rows(rng, 5, 4)
        p = frame_posterior(rows[0], rows[1], list(rows[2:]), 0.1)
        assert 0.0 < p < 1.0
        assert frame_posterior(rows[0], rows[1], [], 0.1) == 1.0

    def test_posterior_is_softmax_of_similarities(self):
        rng = np.random.default_rng(5)
        rows = _unit_rows(rng, 4, 6)
        logits = np.array([frame_similarity(rows[0], d, 0.2) for d in rows[1:]])
        expected = np.exp(logits[0]) / np.sum(np.exp(logits))
        assert frame_posterior(rows[0], rows[1], list(rows[2:]), 0.2) == pytest.approx(expected, rel=1e-12)
        assert frame_similarity(rows[0], rows[0], 0.1) == pytest.approx(10.0)


class TestGlobalLoss:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        audio, text = _unit_rows(rng, 4, 3), _unit_rows(rng, 4, 3)
        _, (g_audio, g_text) = global_clap_loss(audio, text, 0.2)
        h = 1e-6
        for matrix, grad in ((audio, g_audio), (text, g_text)):
            for idx in np.ndindex(matrix.shape):
                original = matrix[idx]
                matrix[idx] = original + h
                plus, _ = global_clap_loss(audio, text, 0.2)
                matrix[idx] = original - h
                minus, _ = global_clap_loss(audio, text, 0.2)
                matrix[idx] = original
                assert (plus - minus) / (2 * h) == pytest.approx(grad[idx], abs=1e-6)

    def test_uniform_similarity_gives_log_n(self):
        v = np.tile(np.array([1.0, 0.0]), (3, 1))
        loss, _ = global_clap_loss(v, v.copy(), 0.1)
        assert loss == pytest.approx(math.log(3))

    def test_needs_two_pairs(self):
        with pytest.raises(InvalidBatchError):
            global_clap_loss(np.eye(2)[:1], np.eye(2)[:1], 0.1)
        with pytest.raises(ShapeMismatchError):
            global_clap_loss(np.eye(3), np.eye(3)[:2], 0.1)


@pytest.mark.parametrize("loss_kind", [LossKind.FRAME_WISE, LossKind.GLOBAL])
def test_single_example_batch_rejected(loss_kind, tiny_model, make_mel):
    example = TrainingExample("a", make_mel(np.random.default_rng(8), 8, 3),
                              (Region(onset=0.0, offset=0.1, text="a dog barks"),), "a dog barks")
    with pytest.raises(InvalidBatchError):
        loss_and_gradient(init_params(tiny_model), [example], loss_kind, 0.1)


@pytest.mark.parametrize("loss_kind", [LossKind.FRAME_WISE, LossKind.GLOBAL])
def test_model_gradient_matches_finite_differences(loss_kind, tiny_model, make_mel):
    rng = np.random.default_rng(6)
    params = init_params(tiny_model)
    examples = [
        TrainingExample("a", make_mel(rng, 8, 3), (Region(onset=0.0, offset=0.07, text="a dog barks"),
                                                   Region(onset=0.05, offset=0.16, text="a car passes")),
                        "a dog barks a car passes"),
        TrainingExample("b", make_mel(rng, 6, 3), (Region(onset=0.02, offset=0.11, text="rain falls softly"),),
                        "rain falls softly"),
    ]
    _, analytic = loss_and_gradient(params, examples, loss_kind, 0.2)

    h = 1e-5
    for name in PARAM_NAMES:
        tensor = params[name]
        numeric = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            original = tensor[idx]
            tensor[idx] = original + h
            plus, _ = loss_and_gradient(params, examples, loss_kind, 0.2)
            tensor[idx] = original - h
            minus, _ = loss_and_gradient(params, examples, loss_kind, 0.2)
            tensor[idx] = original
            numeric[idx] = (plus - minus) / (2 * h)
        scale = max(np.linalg.norm(numeric) + np.linalg.norm(analytic[name]), 1e-12)
        assert np.linalg.norm(numeric - analytic[name]) / scale < 1e-4, name
