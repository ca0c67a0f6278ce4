"""
tests/conftest.py
Shared fixtures: a tiny synthetic dataset and narrow 32 px model configs
"""

import pytest
from helpers import narrow_model, narrow_train_config

from cropsim.dataset import load_manifest
from cropsim.dataset.synth import synth_generate
from cropsim.utils.config import ModelConfig, SynthConfig, TrainConfig


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run slow end-to-end tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _quiet_env(monkeypatch):
    monkeypatch.setenv("CROPSIM_LOG_FILE", "")
    monkeypatch.setenv("CROPSIM_DEVICE", "cpu")


@pytest.fixture(scope="session")
def tiny_synth_config() -> SynthConfig:
    # 8 train / 2 val / 2 test sequences at days 7, 21, 51, 91
    return SynthConfig(n_sequences=12, n_times=4, image_size=32, n_treatments=6, seed=0)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_synth_config):
    out = tmp_path_factory.mktemp("tiny_synth")
    return synth_generate(tiny_synth_config, out, progress=False)


@pytest.fixture(scope="session")
def tiny_records(tiny_dataset):
    return load_manifest(tiny_dataset)


@pytest.fixture
def model_config() -> ModelConfig:
    return narrow_model()


@pytest.fixture
def full_model_config() -> ModelConfig:
    return narrow_model(("t", "c", "b"))


@pytest.fixture
def train_config() -> TrainConfig:
    return narrow_train_config()
