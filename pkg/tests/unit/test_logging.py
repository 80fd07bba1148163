import logging
from collections.abc import Iterator

import pytest
from rich.logging import RichHandler

from deskdet.config import DeskdetSettings
from deskdet.constants import LogLevel
from deskdet.exceptions import UnsupportedOptionError
from deskdet.logging import log_duration, logger, resolve_level, setup_logger


@pytest.fixture
def restore_logger() -> Iterator[None]:
    yield
    setup_logger(LogLevel.WARNING)


@pytest.mark.parametrize(
    ("level", "expected"),
    [("info", logging.INFO), ("Debug", logging.DEBUG), (" ERROR ", logging.ERROR), (logging.CRITICAL, 50)],
)
def test_resolve_level(level: int | str, expected: int) -> None:
    assert resolve_level(level) == expected


def test_unknown_level_name_is_rejected() -> None:
    with pytest.raises(UnsupportedOptionError, match="verbose"):
        resolve_level("verbose")


def test_default_level_comes_from_settings(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("DESKDET_LOG_LEVEL", "error")
    assert resolve_level(None) == logging.ERROR
    monkeypatch.delenv("DESKDET_LOG_LEVEL")
    assert DeskdetSettings(_env_file=None).log_level is LogLevel.WARNING


def test_settings_parse_level_names_in_any_case() -> None:
    assert DeskdetSettings(log_level="INFO").log_level is LogLevel.INFO


@pytest.mark.usefixtures("restore_logger")
def test_setup_logger_keeps_a_single_rich_handler() -> None:
    setup_logger("debug")
    setup_logger("info")
    assert logger.level == logging.INFO
    assert len(logger.handlers) == 1
    assert isinstance(logger.handlers[0], RichHandler)
    assert not logger.propagate


@pytest.mark.usefixtures("restore_logger")
def test_log_duration_reports_the_task(caplog: pytest.LogCaptureFixture) -> None:
    setup_logger("info")
    logger.addHandler(caplog.handler)
    with log_duration("training"):
        pass
    assert any(r.getMessage().startswith("training took ") for r in caplog.records)


@pytest.mark.usefixtures("restore_logger")
def test_log_duration_is_silent_when_the_block_fails(caplog: pytest.LogCaptureFixture) -> None:
    setup_logger("info")
    logger.addHandler(caplog.handler)
    with pytest.raises(RuntimeError), log_duration("training"):
        raise RuntimeError
    assert not caplog.records
