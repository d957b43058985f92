from __future__ import annotations

import logging
import os
from typing import List, Literal

LogLevel = Literal["I", "D", "W", "E", "*"]

_LOGGER_LEVELS = {
    "I": logging.INFO,
    "D": logging.DEBUG,
    "W": logging.WARNING,
    "E": logging.ERROR,
    "*": logging.INFO,
}

logger = logging.getLogger(__name__)


def format_log(level: LogLevel, message: str) -> str:
    l = (level or "I").upper()
    code = l if l in _LOGGER_LEVELS else "I"
    return f"[{code}] {message}"


def configure_logging(level: str | None = None) -> None:
    raw = str(level or os.getenv("EXOSIM_LOG_LEVEL", "WARNING") or "WARNING").strip().upper()
    numeric = logging.getLevelName(raw)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


class RunLog:
    """Ordered "[I] ..." lines for one simulation run, mirrored to a logger."""

    def __init__(self, sink: logging.Logger | None = None) -> None:
        self.lines: List[str] = []
        self._sink = sink or logger

    def line(self, level: LogLevel, message: str) -> None:
        formatted = format_log(level, message)
        self.lines.append(formatted)
        self._sink.log(_LOGGER_LEVELS.get(formatted[1], logging.INFO), message)

    def info(self, message: str) -> None:
        self.line("I", message)

    def debug(self, message: str) -> None:
        self.line("D", message)

    def warn(self, message: str) -> None:
        self.line("W", message)
