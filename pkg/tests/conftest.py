import numpy as np
import pytest

from satavit import ModelConfig, random_init


@pytest.fixture
def small_config():
    return ModelConfig(depth=3, dim=8, heads=2, patch=2, image=8, num_classes=4,
                       gamma=0.5, alpha=1.0)


@pytest.fixture
def small_model(small_config):
    return random_init(small_config, seed=1234)


def random_attention_maps(rng: np.random.Generator, heads: int, n: int) -> np.ndarray:
    """Row-stochastic per-head maps for fixtures that need an attention input."""
    logits = rng.normal(size=(heads, n, n))
    e = np.exp(logits - logits.max(axis=2, keepdims=True))
    return e / e.sum(axis=2, keepdims=True)
