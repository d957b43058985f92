import logging

import pytest
from pydantic import ValidationError

from exosim.logging_utils import RunLog, format_log
from exosim.settings import SimConfig, env_seed, load_config, resolve_seed


def _getenv_factory(values: dict[str, str]):
    def _getenv(name: str, default: str | None = None):
        return values.get(name, default)

    return _getenv


def test_load_config_defaults():
    config = load_config(getenv=_getenv_factory({}))

    assert config.trace_mode == "events"
    assert config.fps == 10.0
    assert config.frame_period_ticks == 100
    assert config.latency_ticks == 51
    assert config.watchdog_mode == "halt"
    assert config.hibernate_stops_watchdog is True
    assert config.hibernate_grace_ms == 120_000
    assert config.seed is None


def test_load_config_reads_env():
    config = load_config(
        getenv=_getenv_factory(
            {
                "EXOSIM_TRACE": "full",
                "EXOSIM_FPS": "15.4",
                "EXOSIM_WATCHDOG_MODE": "reset",
                "EXOSIM_HIBERNATE_STOPS_WATCHDOG": "0",
                "EXOSIM_HIBERNATE_GRACE_S": "30",
            }
        )
    )

    assert config.trace_mode == "full"
    assert config.frame_period_ticks == 65
    assert config.watchdog_mode == "reset"
    assert config.hibernate_stops_watchdog is False
    assert config.hibernate_grace_ms == 30_000


def test_load_config_ignores_malformed_env():
    config = load_config(getenv=_getenv_factory({"EXOSIM_FPS": "fast", "EXOSIM_TRACE": "verbose"}))

    assert config.fps == 10.0
    assert config.trace_mode == "events"


def test_overrides_beat_env_and_none_is_ignored():
    config = load_config(getenv=_getenv_factory({"EXOSIM_FPS": "20"}), fps=5.0, latency_ms=None)

    assert config.frame_period_ticks == 200
    assert config.latency_ms == 51.0


def test_sim_config_rejects_unknown_fields():
    with pytest.raises(ValidationError):
        SimConfig(speed=3)


def test_sim_config_rejects_non_positive_fps():
    with pytest.raises(ValidationError):
        SimConfig(fps=0)


def test_seed_precedence():
    env = _getenv_factory({"EXOSIM_SEED": "9"})

    assert resolve_seed(3, 5, env) == 3
    assert resolve_seed(None, 5, env) == 5
    assert resolve_seed(None, None, env) == 9
    assert resolve_seed(None, None, _getenv_factory({})) == 0


def test_env_seed_rejects_garbage():
    assert env_seed(_getenv_factory({"EXOSIM_SEED": "-1"})) is None
    assert env_seed(_getenv_factory({"EXOSIM_SEED": "abc"})) is None


def test_format_log_prefixes_level():
    assert format_log("W", "range_stale tick=1052") == "[W] range_stale tick=1052"
    assert format_log("x", "hello") == "[I] hello"


def test_run_log_mirrors_to_logger(caplog):
    log = RunLog(logging.getLogger("exosim.test"))

    with caplog.at_level(logging.INFO, logger="exosim.test"):
        log.info("trigger tick=551")
        log.warn("watchdog tick=9004")

    assert log.lines == ["[I] trigger tick=551", "[W] watchdog tick=9004"]
    assert [r.levelno for r in caplog.records] == [logging.INFO, logging.WARNING]
