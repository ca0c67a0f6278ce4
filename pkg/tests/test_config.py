import json
from pathlib import Path

import pytest

import cropsim
from cropsim.utils.config import (
    ModelConfig,
    SweepSpec,
    SynthConfig,
    TrainConfig,
    load_config,
    normalize_conditions,
)

CONFIG_DIR = Path(cropsim.__file__).parent / "config"


def test_json_and_env_variants_agree():
    from_json = load_config(CONFIG_DIR / "toy.json")
    from_env = load_config(CONFIG_DIR / "toy.env")
    assert from_json.synth.n_sequences == from_env.synth.n_sequences == 220
    assert from_json.train.model.conditions == from_env.train.model.conditions == ("t", "c", "b")
    assert from_env.train.max_val_pairs == 128
    assert from_env.train.model.base_channels == 64


def test_large_config_conditions_all_types():
    config = load_config(CONFIG_DIR / "full_scale.json")
    assert config.train.conditions == ("t", "c", "b")
    assert config.train.image_size == 256
    assert config.train.model.fusion_size == 16


@pytest.mark.parametrize("name", ["toy.json", "toy.env", "full_scale.json"])
def test_shipped_configs_keep_generator_shapes(name):
    model = load_config(CONFIG_DIR / name).train.model
    assert model.embed_dim == 64
    assert model.latent_channels == 512


def test_toy_latent_is_two_by_two():
    model = load_config(CONFIG_DIR / "toy.json").train.model
    assert model.image_size // 32 == 2


def test_missing_config_uses_defaults():
    config = load_config(None)
    assert config.train.lambda_gp == 10.0
    assert config.train.n_critic == 5
    assert config.train.adam_betas == (0.0, 0.9)


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"learning_rate": 0.1}}))
    with pytest.raises(ValueError, match="learning_rate"):
        load_config(path)

    path.write_text(json.dumps({"optimizer": {}}))
    with pytest.raises(ValueError, match="sections"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.json")


def test_conditions_are_ordered_and_require_time():
    assert normalize_conditions(["b", "t", "c"]) == ("t", "c", "b")
    assert normalize_conditions("t,b") == ("t", "b")
    with pytest.raises(ValueError):
        normalize_conditions(["c"])
    with pytest.raises(ValueError):
        normalize_conditions(["t", "x"])


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lambda_gp=0.0)
    with pytest.raises(ValueError):
        TrainConfig(n_critic=0)
    with pytest.raises(ValueError):
        TrainConfig(extractor="inception")


def test_image_size_must_divide_by_32():
    with pytest.raises(ValueError):
        ModelConfig(image_size=48)
    with pytest.raises(ValueError):
        SynthConfig(image_size=16)


def test_synth_schedule_has_growing_gaps():
    days = SynthConfig(n_times=8).times
    assert days[0] == 7 and days[-1] == 91
    gaps = [b - a for a, b in zip(days, days[1:])]
    assert gaps == sorted(gaps)


def test_complementary_scale_pairs():
    spec = SweepSpec(mode="biomass", out_dir="out", scales=[50, 100, 150])
    assert spec.scale_pairs() == [(50, 150), (100, 100), (150, 50)]


def test_single_species_scale_pairs_include_anchor():
    spec = SweepSpec(mode="biomass", out_dir="out", scales=[50, 150], ratio_mode="sw")
    assert spec.scale_pairs() == [(50, 100), (100, 100), (150, 100)]


def test_grid_scale_pairs():
    spec = SweepSpec(mode="biomass", out_dir="out", scales=[0, 100], ratio_mode="grid")
    assert spec.scale_pairs() == [(0, 0), (0, 100), (100, 0), (100, 100)]


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(mode="time", out_dir="out")
    with pytest.raises(ValueError):
        SweepSpec(mode="biomass", out_dir="out", scales=[-10])
    with pytest.raises(ValueError):
        SweepSpec(mode="variability", out_dir="out", noise_draws=0)
    with pytest.raises(ValueError):
        SweepSpec(mode="treatment", out_dir="out", change="irrigation")
