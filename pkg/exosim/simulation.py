from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np

from .firmware import Board, Firmware
from .kernel import Kernel, KernelEvent
from .logging_utils import RunLog
from .peripherals import BatteryState, Detector, HandPlant, system_current, tap_service
from .scenario import Scenario, compile_timeline
from .settings import SimConfig, resolve_seed
from .trace import RunSummary, TraceRecord

logger = logging.getLogger(__name__)

EXIT_CLEAN = 0
EXIT_PARSE = 2
EXIT_WATCHDOG = 3
EXIT_HIBERNATE = 4

_KERNEL_TO_TRACE = {
    "task_suspend": "task_suspend",
    "task_resume": "task_resume",
    "fault": "fault",
    "watchdog_expired": "watchdog",
}
_WARN_EVENTS = {"fault", "range_stale", "watchdog"}


class Simulation:
    """Kernel, firmware and plant advanced together one tick at a time."""

    def __init__(self, scenario: Scenario, config: SimConfig | None = None) -> None:
        config = config or SimConfig()
        self.seed = resolve_seed(config.seed, scenario.seed)
        self.config = config
        self.scenario = scenario
        self.timeline = compile_timeline(scenario)
        self.kernel = Kernel(watchdog_timeout_ms=config.watchdog_timeout_ms)

        slope = scenario.battery_slope if scenario.battery_slope is not None else config.battery_slope
        detector = Detector(
            period_ticks=config.frame_period_ticks,
            latency_ticks=config.latency_ticks,
            rng=np.random.default_rng(self.seed),
            visibility=self.timeline.visibility_at_tick,
        )
        self.board = Board(
            battery=BatteryState.from_voltage(scenario.initial.battery_v, slope_k=slope),
            hand=HandPlant(t_open_ms=config.t_open_ms, t_close_ms=config.t_close_ms),
            detector=detector,
            distance_mm=self.timeline.distance_at_tick(0),
        )
        self.firmware = Firmware(self.kernel, self.board, config, emit=self._on_firmware_event)

        self.records: List[TraceRecord] = []
        self.log = RunLog(logger)
        self.summary = RunSummary(seed=self.seed)
        self.exit_code: Optional[int] = None
        self.end_tick = scenario.end_tick
        self._tap_idx = 0
        self._events: List[Tuple[int, str, str]] = []
        self._current = system_current(self.firmware.motor, self.board.hand)

        self.log.info(
            f"run_start seed={self.seed} end_tick={self.end_tick} fps={config.fps} "
            f"frame_period_ms={config.frame_period_ticks} latency_ms={config.latency_ticks} "
            f"battery_v={self.board.battery.voltage:.4f}"
        )

    @property
    def now(self) -> int:
        return self.kernel.now

    @property
    def finished(self) -> bool:
        return self.exit_code is not None

    # --- event plumbing ------------------------------------------------------

    def _take_kernel_events(self, events: List[KernelEvent]) -> None:
        for ev in events:
            kind = _KERNEL_TO_TRACE.get(ev.kind)
            if kind is not None:
                self._events.append((ev.tick, kind, f"task={ev.task} {ev.detail}".strip()))

    def _on_firmware_event(self, kind: str, detail: str) -> None:
        self._take_kernel_events(self.kernel.drain_events())
        self._events.append((self.kernel.now, kind, detail))

    def _count(self, kind: str, tick: int) -> None:
        s = self.summary
        if kind == "trigger":
            s.grasp_cycles += 1
        elif kind == "release":
            s.releases_by_tap += 1
        elif kind == "timeout":
            s.timeouts += 1
        elif kind == "hibernate":
            s.hibernated_at = tick / 1000.0
        elif kind == "watchdog":
            s.watchdog_expired = True

    def _record(self, tick: int, event: str = "", detail: str = "") -> None:
        fw = self.firmware
        sel = self.kernel.last_selection
        running = ""
        if sel is not None and sel.tick == self.now and sel.task_id is not None:
            running = self.kernel.tasks[sel.task_id].name
        frame = fw.last_frame
        self.records.append(
            TraceRecord(
                tick=tick,
                t_s=tick / 1000.0,
                running_task=running,
                motor_state=fw.motor.value.value,
                hand_state=self.board.hand.state.value,
                detected_id=frame.object_id if frame is not None else 0,
                debounce_count=fw.debounce.object_count,
                range_mm=fw.buffers.range_mm,
                tap_latched=fw.buffers.accel.latched,
                laser_on=self.board.laser.on,
                battery_v=self.board.battery.voltage,
                current_mA=self._current,
                event=event,
                detail=detail,
            )
        )

    # --- stepping ------------------------------------------------------------

    def _apply_env(self, tick: int) -> None:
        self.board.distance_mm = self.timeline.distance_at_tick(tick)
        taps = self.timeline.tap_ticks
        while self._tap_idx < len(taps) and taps[self._tap_idx] <= tick:
            self.board.tap = tap_service(self.board.tap, "tap")
            self.log.info(f"tap tick={taps[self._tap_idx]} latched={int(self.board.tap.latched)}")
            self._tap_idx += 1

    def step(self) -> None:
        """Advance exactly one tick."""
        if self.finished:
            return
        tick = self.now + 1
        self._apply_env(tick)
        self._take_kernel_events(self.kernel.advance_tick())

        self._current = system_current(self.firmware.motor, self.board.hand)
        self.board.hand.advance(1)
        self.board.battery.consume(self._current, 0.001)

        events, self._events = self._events, []
        for ev_tick, kind, detail in events:
            self._count(kind, ev_tick)
            line = f"{kind} tick={ev_tick} {detail}".strip()
            if kind in _WARN_EVENTS:
                self.log.warn(line)
            elif kind in ("task_suspend", "task_resume"):
                self.log.debug(line)
            else:
                self.log.info(line)
            self._record(ev_tick, kind, detail)
        if not events and self.config.trace_mode == "full":
            self._record(tick)

        self._check_stop(tick, events)

    def _check_stop(self, tick: int, events: List[Tuple[int, str, str]]) -> None:
        if any(kind == "watchdog" for _, kind, _ in events):
            if self.config.watchdog_mode == "reset":
                aborted = self.firmware.restart()
                self.summary.watchdog_resets += 1
                if aborted:
                    self.summary.aborted_cycles += 1
                self.log.warn(f"watchdog_reset tick={tick} aborted_cycle={int(aborted)}")
            else:
                self._finish(EXIT_WATCHDOG)
                return
        hib = self.firmware.hibernated_tick
        if hib is not None and tick >= min(hib + self.config.hibernate_grace_ms, self.end_tick):
            self._finish(EXIT_HIBERNATE)
            return
        if tick >= self.end_tick:
            self._finish(EXIT_CLEAN)

    def _finish(self, code: int) -> None:
        self.exit_code = code
        self.summary.exit_code = code
        self.summary.final_battery_v = self.board.battery.voltage
        self.summary.duration_s = self.kernel.clock.time_seconds
        self.log.info(
            f"run_end tick={self.now} exit_code={code} grasp_cycles={self.summary.grasp_cycles} "
            f"final_battery_v={self.summary.final_battery_v:.4f}"
        )

    def _next_interesting_tick(self) -> int:
        candidates = [self.end_tick]
        wake = self.kernel.next_wake_tick()
        if wake is not None:
            candidates.append(wake)
        taps = self.timeline.tap_ticks
        if self._tap_idx < len(taps):
            candidates.append(taps[self._tap_idx])
        wd = self.kernel.watchdog
        if wd.enabled and not wd.expired:
            candidates.append(wd.expiry_tick())
        hib = self.firmware.hibernated_tick
        if hib is not None:
            candidates.append(hib + self.config.hibernate_grace_ms)
        return max(self.now + 1, min(candidates))

    def _idle_span(self, ticks: int) -> None:
        hand = self.board.hand
        while ticks > 0:
            current = system_current(self.firmware.motor, hand)
            remaining = hand.remaining_ms()
            chunk = ticks if remaining is None or remaining <= 0 else min(ticks, remaining)
            hand.advance(chunk)
            self.board.battery.consume(current, chunk / 1000.0)
            self._current = current
            ticks -= chunk

    def fast_forward(self) -> None:
        """Skip ticks on which no task can run (events trace only)."""
        if self.finished or self.config.trace_mode == "full" or self.kernel.has_ready():
            return
        target = self._next_interesting_tick() - 1
        if target > self.now:
            self._idle_span(target - self.now)
            self.kernel.idle_until(target)

    def run(self) -> RunSummary:
        while not self.finished:
            self.step()
            self.fast_forward()
        return self.summary

    def run_until(self, tick: int) -> None:
        while not self.finished and self.now < tick:
            self.step()


def run_simulation(s: Scenario, config: SimConfig | None = None) -> Tuple[List[TraceRecord], RunSummary]:
    sim = Simulation(s, config)
    summary = sim.run()
    return sim.records, summary
