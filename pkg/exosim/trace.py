from __future__ import annotations

import csv
import io
import json
import logging
from typing import IO, Iterable, NamedTuple, Optional

from pydantic import BaseModel, ConfigDict

logger = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "tick",
    "t_s",
    "running_task",
    "motor_state",
    "hand_state",
    "detected_id",
    "debounce_count",
    "range_mm",
    "tap_latched",
    "laser_on",
    "battery_v",
    "current_mA",
    "event",
)

TRACE_EVENTS = frozenset(
    {
        "trigger",
        "grasp",
        "release",
        "timeout",
        "hibernate",
        "watchdog",
        "task_suspend",
        "task_resume",
        "fault",
        "range_stale",
    }
)


class TraceRecord(NamedTuple):
    tick: int
    t_s: float
    running_task: str
    motor_state: str
    hand_state: str
    detected_id: int
    debounce_count: int
    range_mm: int
    tap_latched: bool
    laser_on: bool
    battery_v: float
    current_mA: float
    event: str = ""
    detail: str = ""

    def csv_row(self) -> list[str]:
        return [
            str(self.tick),
            f"{self.t_s:.3f}",
            self.running_task,
            self.motor_state,
            self.hand_state,
            str(self.detected_id),
            str(self.debounce_count),
            str(self.range_mm),
            "1" if self.tap_latched else "0",
            "1" if self.laser_on else "0",
            f"{self.battery_v:.5f}",
            f"{self.current_mA:.1f}",
            self.event,
        ]


class RunSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grasp_cycles: int = 0
    releases_by_tap: int = 0
    timeouts: int = 0
    aborted_cycles: int = 0
    final_battery_v: float = 0.0
    hibernated_at: Optional[float] = None
    watchdog_expired: bool = False
    watchdog_resets: int = 0
    exit_code: int = 0
    seed: int = 0
    duration_s: float = 0.0

    @property
    def in_progress(self) -> int:
        return self.grasp_cycles - self.releases_by_tap - self.timeouts - self.aborted_cycles


def write_trace_csv(records: Iterable[TraceRecord], fp: IO[str]) -> int:
    writer = csv.writer(fp, lineterminator="\r\n")
    writer.writerow(TRACE_COLUMNS)
    count = 0
    for record in records:
        writer.writerow(record.csv_row())
        count += 1
    return count


def trace_csv_text(records: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    write_trace_csv(records, buf)
    return buf.getvalue()


def summary_json(summary: RunSummary) -> str:
    return json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def summary_text(summary: RunSummary) -> str:
    hib = "none" if summary.hibernated_at is None else f"{summary.hibernated_at:.3f}s"
    return (
        f"grasp_cycles={summary.grasp_cycles} releases_by_tap={summary.releases_by_tap} "
        f"timeouts={summary.timeouts} aborted_cycles={summary.aborted_cycles}\n"
        f"final_battery_v={summary.final_battery_v:.4f} hibernated_at={hib} "
        f"watchdog_expired={int(summary.watchdog_expired)} watchdog_resets={summary.watchdog_resets}\n"
        f"exit_code={summary.exit_code} seed={summary.seed} duration_s={summary.duration_s:.3f}\n"
    )
