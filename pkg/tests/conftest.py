from pathlib import Path

import numpy as np
import pytest
import torch

from lib.core.config import ExperimentConfig, load_config
from lib.core.trainer import TrainResult, train
from tests.helpers import TINY_OVERRIDES


@pytest.fixture()
def generator() -> torch.Generator:
    return torch.Generator().manual_seed(1234)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture()
def output_root(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    root = tmp_path / "runs"
    monkeypatch.setenv("ESA_OUTPUT_ROOT", str(root))
    return root


@pytest.fixture()
def tiny_config() -> ExperimentConfig:
    """Seconds-scale training setup on a 48x16 synthetic dataset."""
    return load_config(overrides=TINY_OVERRIDES, seed=3)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory: pytest.TempPathFactory) -> TrainResult:
    """One tiny training run shared by every test that needs artifacts."""
    config = load_config(overrides=TINY_OVERRIDES, seed=3)
    return train(config, out_dir=tmp_path_factory.mktemp("tiny_run"))
