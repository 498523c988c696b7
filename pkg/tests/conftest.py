import numpy as np
import pytest
import torch

from pcgdenoise.model import ModelConfig, init_model
from pcgdenoise.signal_core import AudioSegment
from pcgdenoise.synth import make_toy_corpus


MICRO_MODEL = dict(
    levels=2,
    base_channels=4,
    kernel_size=3,
    input_len=64,
    dropout_rate=0.0,
    projection_hidden=8,
    projection_dim=4,
)


@pytest.fixture
def micro_config() -> ModelConfig:
    return ModelConfig(**MICRO_MODEL)


@pytest.fixture
def micro_state(micro_config):
    return init_model(micro_config, seed=1)


@pytest.fixture
def toy_segment() -> AudioSegment:
    rng = np.random.default_rng(0)
    return AudioSegment(
        samples=rng.standard_normal(2000) * 0.2,
        sample_rate_hz=2000,
        source_id="toy",
    )


@pytest.fixture(scope="session")
def toy_recordings():
    return make_toy_corpus(2, 800, 3.0, seed=5)


@pytest.fixture(autouse=True)
def _no_global_torch_seed_dependence():
    """Scramble torch's global RNG before every test: nothing in the package
    may rely on ambient global state for reproducibility."""
    torch.manual_seed(torch.seed())
    yield
