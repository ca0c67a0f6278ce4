import json
from types import SimpleNamespace

import pandas as pd
import pytest

from cropsim import __version__
from cropsim.dataset import load_manifest
from cropsim.main import build_parser, main

TINY_CONFIG = {
    "synth": {"n_sequences": 12, "n_times": 4, "image_size": 32},
    "model": {
        "image_size": 32,
        "conditions": ["t", "c", "b"],
        "embed_dim": 16,
        "z_dim": 16,
        "base_channels": 8,
        "critic_channels": 8,
    },
    "augment": {
        "p_hflip": 0.0,
        "p_vflip": 0.0,
        "p_rot90": 0.0,
        "p_translate": 0.0,
        "p_shadowout": 0.0,
    },
    "train": {"batch_size": 4, "epochs": 1, "n_critic": 2, "max_val_pairs": 4},
    "regressor": {"epochs": 1, "batch_size": 8},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


def test_unknown_flag_exits_with_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["synth", "--out", str(tmp_path), "--bogus"])
    assert excinfo.value.code == 2


def test_command_is_required():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_all_commands_are_registered():
    parser = build_parser()
    choices = next(a for a in parser._actions if a.dest == "command").choices
    assert set(choices) == {
        "synth",
        "train",
        "train-regressor",
        "eval",
        "sweep-time",
        "variability",
        "sweep-treatment",
        "sweep-biomass",
        "ood-grid",
    }


def test_missing_manifest_fails_with_exit_code_one(tmp_path):
    code = main(["train", "--manifest", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "t")])
    assert code == 1


def test_synth_command_with_overrides(tmp_path, config_file):
    out = tmp_path / "data"
    code = main(
        ["synth", "--config", str(config_file), "--n-sequences", "3", "--n-times", "2", "--out", str(out)]
    )
    assert code == 0
    records = load_manifest(out / "manifest.jsonl")
    assert len(records) == 3
    assert all(len(r.times) == 2 for r in records)


def test_elapsed_time_is_logged_from_a_monotonic_clock(tmp_path, config_file, monkeypatch, capsys):
    ticks = iter([100.0, 102.5])
    monkeypatch.setattr("cropsim.main.time", SimpleNamespace(perf_counter=lambda: next(ticks)))
    args = ["synth", "--config", str(config_file), "--n-sequences", "3", "--n-times", "2"]
    assert main([*args, "--out", str(tmp_path / "data")]) == 0
    assert "'synth' finished in 2.5s with exit code 0" in capsys.readouterr().out


@pytest.mark.slow
def test_pipeline_end_to_end(tmp_path, config_file):
    data, train, reg = tmp_path / "data", tmp_path / "train", tmp_path / "reg"
    manifest = data / "manifest.jsonl"
    common = ["--config", str(config_file), "--seed", "0"]
    assert main(["synth", *common, "--out", str(data)]) == 0
    assert main(["train", *common, "--manifest", str(manifest), "--out", str(train)]) == 0
    assert (train / "best.pt").exists() and (train / "last.pt").exists()
    assert main(["train-regressor", *common, "--manifest", str(manifest), "--out", str(reg)]) == 0

    checkpoint = ["--checkpoint", str(train / "best.pt"), "--manifest", str(manifest)]
    regressor = ["--regressor", str(reg / "biomass.pt")]

    assert main(["eval", *checkpoint, *regressor, "--out", str(tmp_path / "eval")]) == 0
    report = json.loads((tmp_path / "eval" / "report.json").read_text())
    assert report["n_pairs"] == 2 * 16
    # days 7, 21, 51, 91 leave the short-term bucket empty
    assert report["counts"] == {"T0": 8, "LT": 24}
    assert report["fid"] is not None
    assert "bm_sw" in report["trait_errors"]
    assert "bm_sw" in report["gen_truth_trait_errors"]
    assert report["truth_mae_ratio"]["bm_sw"] > 0

    out = tmp_path / "sweep_time"
    args = ["sweep-time", *checkpoint, "--max-sequences", "1", "--times", "7,21,60,120"]
    assert main([*args, "--noise-draws", "2", "--out", str(out)]) == 0
    rows = pd.read_csv(out / "sweep_time.csv")
    assert not rows["has_reference"][2] and not rows["has_reference"][3]
    assert rows["ood"][3]
    assert list(rows["has_reference"][:2]) == [not v for v in rows["ood"][:2]]

    out = tmp_path / "variability"
    assert main(["variability", *checkpoint, "--noise-draws", "2", "--out", str(out)]) == 0
    assert len(pd.read_csv(out / "variability.csv")) == 2

    out = tmp_path / "treatment"
    args = ["sweep-treatment", *checkpoint, *regressor, "--change", "density"]
    assert main([*args, "--out", str(out)]) == 0
    assert len(pd.read_csv(out / "treatment_bars.csv")) == 2

    out = tmp_path / "biomass"
    args = ["sweep-biomass", *checkpoint, *regressor, "--scales", "50,150"]
    assert main([*args, "--out", str(out)]) == 0
    summary = json.loads((out / "biomass_curve.json").read_text())
    assert summary["pairs"] == [[50, 150], [100, 100], [150, 50]]

    out = tmp_path / "ood"
    args = ["ood-grid", *checkpoint, "--max-sequences", "1", "--days", "1:100:9"]
    assert main([*args, "--out", str(out)]) == 0
    assert pd.read_csv(out / "ood_grid.csv")["ood"].any()

    # treatment sweeps need a target
    assert main(["sweep-treatment", *checkpoint, "--out", str(tmp_path / "bad")]) == 1
