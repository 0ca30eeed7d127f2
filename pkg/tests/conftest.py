import numpy as np
import pytest

from app.pipeline.settings import AugmentConfig, TrainSettings
from app.pipeline.signal import LabeledDataset
from app.pipeline.synth import SynthSpec, generate
from app.pipeline.training import train_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_ds() -> LabeledDataset:
    """8 windows per class, 24 x 96, seed 3."""
    return generate(SynthSpec(samples_per_class=[8] * 7, seed=3))


@pytest.fixture(scope="session")
def small_model(small_ds):
    model, _ = train_model(small_ds, TrainSettings(features=840, seed=0), AugmentConfig(copies=0))
    return model

