import numpy as np
import pytest

from deskdet.data.dataset import DatasetDescriptor
from deskdet.data.synthetic import SyntheticSpec, gen_synthetic
from deskdet.model.config import ModelConfig
from deskdet.training.config import TrainConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def toy_spec() -> SyntheticSpec:
    return SyntheticSpec(image_size=64, radius_min=5.0, radius_max=12.0, objects_max=2, seed=7)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory: pytest.TempPathFactory, toy_spec: SyntheticSpec) -> DatasetDescriptor:
    """Six training and three validation images of 64x64 blobs."""
    root = tmp_path_factory.mktemp("toy_dataset")
    gen_synthetic(toy_spec, 6, root, "train")
    return gen_synthetic(toy_spec, 3, root, "val")


@pytest.fixture
def toy_model() -> ModelConfig:
    return ModelConfig.toy(64)


@pytest.fixture
def short_train() -> TrainConfig:
    return TrainConfig(steps=2, batch=2, precision="float64", log_every=1)
