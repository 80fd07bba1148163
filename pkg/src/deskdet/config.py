import os
import re
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from deskdet.constants import LogLevel, Precision
from deskdet.model.config import ModelConfig
from deskdet.training.config import TrainConfig

_ENV_REFERENCE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class DeskdetSettings(BaseSettings):
    """Process-wide settings read from ``DESKDET_*`` environment variables and ``.env``."""

    model_config = SettingsConfigDict(
        env_prefix="DESKDET_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: LogLevel = Field(default=LogLevel.WARNING, description="Level of the deskdet logger")
    workers: int = Field(default=4, ge=1, description="Threads for image loading and evaluation")
    precision: Precision = Field(default=Precision.FLOAT32, description="Default training precision")
    run_baseline: bool = Field(default=False, description="Enable the long toy-training acceptance run")

    @field_validator("log_level", mode="before")
    @classmethod
    def parse_log_level(cls, value: Any) -> Any:
        return LogLevel.from_string(value) if isinstance(value, str) else value


class RunConfig(BaseModel):
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


def load_run_config(config_path: str | Path | None = None) -> RunConfig:
    """Load a run configuration from a YAML or JSON file.

    Args:
        config_path: Optional path to the config file; defaults are used when it is missing

    Returns:
        RunConfig with ``${VAR}`` references in string values replaced from the environment

    """
    config_dict: dict[str, Any] = {}

    if config_path and Path(config_path).exists():
        with open(config_path, encoding="utf-8") as f:
            loaded = yaml.safe_load(f)
            if loaded:
                config_dict = _resolve_env_vars(loaded)

    return RunConfig.model_validate(config_dict)


def _resolve_env_vars(config: Any) -> Any:
    """Recursively resolve environment variable references in config.

    Unset variables are left as written.
    """
    if isinstance(config, dict):
        return {key: _resolve_env_vars(value) for key, value in config.items()}
    if isinstance(config, list):
        return [_resolve_env_vars(item) for item in config]
    if isinstance(config, str):
        return _ENV_REFERENCE.sub(lambda match: os.getenv(match.group(1), match.group(0)), config)
    return config


def dump_run_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False))
