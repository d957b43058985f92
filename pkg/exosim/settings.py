from __future__ import annotations

import logging
import math
import os
from typing import Any, Callable, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

logger = logging.getLogger(__name__)

Getenv = Callable[[str, "str | None"], "str | None"]

TraceMode = Literal["full", "events"]
WatchdogMode = Literal["halt", "reset"]


class SimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # None defers to the scenario header, then EXOSIM_SEED, then 0
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    trace_mode: TraceMode = "events"

    # detector stub
    fps: float = Field(default=10.0, gt=0)
    latency_ms: float = Field(default=51.0, ge=0)

    # task cadences (ms)
    poll_period_ms: int = Field(default=50, gt=0)
    motor_period_ms: int = Field(default=100, gt=0)
    battery_period_ms: int = Field(default=60_000, gt=0)
    open_timeout_ms: int = Field(default=10_000, gt=0)
    stale_range_ms: int = Field(default=1_000, gt=0)

    range_threshold_mm: int = Field(default=30, gt=0)
    debounce_frames: int = Field(default=6, ge=1)

    # plant
    t_open_ms: int = Field(default=2_000, gt=0)
    t_close_ms: int = Field(default=2_000, gt=0)

    # watchdog
    watchdog_timeout_ms: int = Field(default=8_000, gt=0)
    watchdog_mode: WatchdogMode = "halt"
    hibernate_stops_watchdog: bool = True
    hibernate_grace_ms: int = Field(default=120_000, ge=0)

    # battery + estimator
    battery_slope: float = Field(default=2.2319e-3, gt=0)
    estimator_window: int = Field(default=10, ge=2)
    cutoff_voltage: float = 9.0
    hibernate_threshold_min: float = Field(default=30.0, gt=0)

    @field_validator("fps")
    @classmethod
    def _fps_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("fps must be finite")
        return value

    @property
    def frame_period_ticks(self) -> int:
        return max(1, math.ceil(1000.0 / self.fps - 1e-9))

    @property
    def latency_ticks(self) -> int:
        return math.ceil(self.latency_ms - 1e-9)


def _env_raw(getenv: Getenv, name: str) -> str:
    return str(getenv(name, "") or "").strip()


def _env_int(getenv: Getenv, name: str, default: int, *, minimum: int = 0) -> int:
    raw = _env_raw(getenv, name)
    if not raw:
        return default
    try:
        value = int(raw)
    except Exception:
        logger.warning("config_env_invalid name=%s value=%s", name, raw)
        return default
    return value if value >= minimum else default


def _env_float(getenv: Getenv, name: str, default: float) -> float:
    raw = _env_raw(getenv, name)
    if not raw:
        return default
    try:
        value = float(raw)
    except Exception:
        logger.warning("config_env_invalid name=%s value=%s", name, raw)
        return default
    return value if math.isfinite(value) and value > 0 else default


def _env_bool(getenv: Getenv, name: str, default: bool) -> bool:
    raw = _env_raw(getenv, name).lower()
    if not raw:
        return default
    return raw in {"1", "true", "yes", "on"}


def _env_choice(getenv: Getenv, name: str, default: str, choices: set[str]) -> str:
    raw = _env_raw(getenv, name).lower()
    if not raw:
        return default
    if raw not in choices:
        logger.warning("config_env_invalid name=%s value=%s", name, raw)
        return default
    return raw


def env_seed(getenv: Getenv = os.getenv) -> int | None:
    """EXOSIM_SEED, or None when unset or malformed."""
    raw = _env_raw(getenv, "EXOSIM_SEED")
    if not raw:
        return None
    try:
        value = int(raw)
    except Exception:
        logger.warning("config_env_invalid name=EXOSIM_SEED value=%s", raw)
        return None
    return value if value >= 0 else None


def load_config(getenv: Getenv = os.getenv, **overrides: Any) -> SimConfig:
    """Build a SimConfig from EXOSIM_* variables, then apply non-None overrides."""
    values: dict[str, Any] = {
        "trace_mode": _env_choice(getenv, "EXOSIM_TRACE", "events", {"full", "events"}),
        "fps": _env_float(getenv, "EXOSIM_FPS", 10.0),
        "latency_ms": _env_float(getenv, "EXOSIM_LATENCY_MS", 51.0),
        "watchdog_mode": _env_choice(getenv, "EXOSIM_WATCHDOG_MODE", "halt", {"halt", "reset"}),
        "hibernate_stops_watchdog": _env_bool(getenv, "EXOSIM_HIBERNATE_STOPS_WATCHDOG", True),
        "hibernate_grace_ms": 1000 * _env_int(getenv, "EXOSIM_HIBERNATE_GRACE_S", 120),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**values)


def resolve_seed(
    explicit: Optional[int],
    scenario_seed: Optional[int],
    getenv: Getenv = os.getenv,
) -> int:
    """Explicit (CLI/API) seed, then the scenario header, then EXOSIM_SEED, then 0."""
    if explicit is not None:
        return explicit
    if scenario_seed is not None:
        return scenario_seed
    from_env = env_seed(getenv)
    return from_env if from_env is not None else 0
