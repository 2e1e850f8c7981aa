import pytest
import torch

from motor_anticipate.model import InteractionModel, ModelConfig
from motor_anticipate.types import SceneConfig

torch.set_num_threads(1)


@pytest.fixture
def small_scene_config():
    return SceneConfig(frame_size=(32, 32), num_frames_observed=8,
                       num_frames_future=4, num_objects=3, noise_level=0.01,
                       seed=123)


@pytest.fixture
def small_model_config():
    return ModelConfig(frame_size=(32, 32), num_frames=8,
                       channels=(4, 6, 8, 10, 10), num_actions=4)


@pytest.fixture
def small_model(small_model_config):
    return InteractionModel(small_model_config, seed=3)


@pytest.fixture
def small_model64(small_model_config):
    return InteractionModel(small_model_config, seed=3, dtype=torch.float64)


def random_distribution(rng, shape):
    """Random normalized map; for 3D shapes each temporal slice sums to 1."""
    x = rng.random(shape) + 0.05
    if len(shape) == 3:
        return x / x.sum(axis=(-2, -1), keepdims=True)
    return x / x.sum()
