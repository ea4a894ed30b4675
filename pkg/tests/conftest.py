import numpy as np
import pytest

from app.domain.annotations import AnnotatedClip, Region
from app.domain.audio import MelFrames
from app.domain.embeddings import ModelConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: benchmark sintético completo (minutos)")


@pytest.fixture(autouse=True)
def _isolated_logs(tmp_path, monkeypatch):
    monkeypatch.setenv("STRONGCAP_LOG_DIR", str(tmp_path / "logs"))


@pytest.fixture
def train_clip() -> AnnotatedClip:
    """Clip del tren: dos anotadores sobre 20.848 s"""
    regions = (
        Region(onset=0.000, offset=2.605, text="Train approaching with horn.", annotator_id="A"),
        Region(onset=2.624, offset=20.848, text="Train going by.", annotator_id="A"),
        Region(onset=0.040, offset=1.746, text="A train horn blares in the distance.", annotator_id="B"),
        Region(onset=1.760, offset=2.969,
               text="A train drives by at a deafening volume and close distance.", annotator_id="B"),
        Region(onset=2.982, offset=20.848,
               text="A train drives off into the distance gradually decreasing in volume.", annotator_id="B"),
    )
    return AnnotatedClip(clip_id="train_horn", duration=20.848, subclass="rail", audio_path="audio/train_horn.wav",
                         regions=regions)


@pytest.fixture
def tiny_model() -> ModelConfig:
    return ModelConfig(mel_bins=3, audio_hidden=5, text_hidden=4, dim=4, mixer_window=3, text_buckets=64, seed=3)


@pytest.fixture
def make_mel():
    def _make(rng: np.random.Generator, frames: int, bins: int, hop: float = 0.02) -> MelFrames:
        return MelFrames(frames=rng.random((frames, bins)), hop=hop)
    return _make
