import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from typing import Any

from rich.logging import RichHandler

from deskdet.constants import LogLevel

logger = logging.getLogger("deskdet")


def resolve_level(level: int | str | None) -> int:
    """Numeric level for a number, a level name (any case) or ``None``.

    ``None`` reads ``DESKDET_LOG_LEVEL`` through ``DeskdetSettings``.

    Raises:
        UnsupportedOptionError: If ``level`` is not a known level name

    """
    if level is None:
        from deskdet.config import DeskdetSettings

        level = DeskdetSettings().log_level
    if isinstance(level, int):
        return level
    return LogLevel.from_string(level).number


def setup_logger(
    level: int | str | None = None,
    rich_tracebacks: bool = True,
    log_format: str | None = None,
    propagate: bool = False,
    **kwargs: Any,
) -> None:
    """Configure the deskdet logger.

    Args:
        level: Level number or name; ``None`` uses the ``DESKDET_LOG_LEVEL`` setting (default WARNING)
        rich_tracebacks: Whether to enable rich tracebacks (default: True)
        log_format: Optional custom log format string
        propagate: Whether to propagate logs to parent loggers (default: False)
        **kwargs: Additional keyword arguments to pass to RichHandler

    """
    logger.setLevel(resolve_level(level))
    logger.propagate = propagate

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    # Messages carry paths, shapes and index lists, never rich markup.
    handler = RichHandler(rich_tracebacks=rich_tracebacks, markup=False, **kwargs)

    if log_format:
        handler.setFormatter(logging.Formatter(log_format))

    logger.addHandler(handler)


@contextmanager
def log_duration(task: str, level: int = logging.INFO) -> Iterator[None]:
    """Log the wall time of the block once it exits without an error."""
    start = time.perf_counter()
    yield
    logger.log(level, f"{task} took {time.perf_counter() - start:.2f}s")


setup_logger(LogLevel.WARNING)
