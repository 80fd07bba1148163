from pathlib import Path

import pytest
from pydantic import ValidationError

from deskdet.config import DeskdetSettings, RunConfig, _resolve_env_vars, dump_run_config, load_run_config
from deskdet.constants import AttentionKind, IoULossKind, NeckPreset, Precision
from deskdet.exceptions import UnsupportedOptionError
from deskdet.model.config import ModelConfig


def test_env_references_are_substituted(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("DESKDET_TEST_LOSS", "wiou")
    monkeypatch.delenv("DESKDET_UNSET_VALUE", raising=False)
    resolved = _resolve_env_vars(
        {"loss": {"reg_variant": "${DESKDET_TEST_LOSS}"}, "tags": ["a-${DESKDET_UNSET_VALUE}", 3]}
    )
    assert resolved == {"loss": {"reg_variant": "wiou"}, "tags": ["a-${DESKDET_UNSET_VALUE}", 3]}


def test_missing_file_gives_defaults(tmp_path: Path) -> None:
    config = load_run_config(tmp_path / "absent.yaml")
    assert config.model.neck.preset is NeckPreset.BGF
    assert config.train.lr0 == 0.01


def test_yaml_run_config_is_loaded(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("DESKDET_TEST_STEPS", "12")
    path = tmp_path / "run.yaml"
    path.write_text(
        "model:\n"
        "  input_size: 64\n"
        "  attention:\n"
        "    kind: cbam\n"
        "  loss:\n"
        "    reg_variant: wiou\n"
        "train:\n"
        "  steps: ${DESKDET_TEST_STEPS}\n"
        "  precision: float64\n"
    )
    config = load_run_config(path)
    assert config.model.attention.kind is AttentionKind.CBAM
    assert config.model.loss.reg_variant is IoULossKind.WIOU
    assert config.train.steps == 12
    assert config.train.precision is Precision.FLOAT64


def test_dumped_config_loads_back(tmp_path: Path) -> None:
    config = RunConfig.model_validate({"model": {"input_size": 64}, "train": {"batch": 2}})
    path = tmp_path / "run.yaml"
    dump_run_config(config, path)
    assert load_run_config(path) == config


def test_invalid_values_are_rejected(tmp_path: Path) -> None:
    path = tmp_path / "bad.yaml"
    path.write_text("train:\n  lr0: 0\n")
    with pytest.raises(ValidationError):
        load_run_config(path)


def test_settings_read_prefixed_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("DESKDET_WORKERS", "2")
    monkeypatch.setenv("DESKDET_PRECISION", "float64")
    monkeypatch.delenv("DESKDET_RUN_BASELINE", raising=False)
    settings = DeskdetSettings()
    assert settings.workers == 2
    assert settings.precision is Precision.FLOAT64
    assert settings.run_baseline is False


def test_option_parsing_is_case_insensitive() -> None:
    assert AttentionKind.from_string(" BRA ") is AttentionKind.BRA
    with pytest.raises(UnsupportedOptionError) as excinfo:
        NeckPreset.from_string("hourglass")
    assert "bgf" in excinfo.value.supported


def test_shipped_toy_config_is_the_toy_model() -> None:
    config = load_run_config(Path(__file__).parents[2] / "configs" / "toy.yaml")
    assert config.model == ModelConfig.toy(128)
    assert config.train.steps == 200
