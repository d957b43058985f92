from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

from .errors import PreconditionError
from .kernel import Kernel, TaskState
from .peripherals import (
    BatterySample,
    BatteryState,
    DetectionFrame,
    Detector,
    HandPlant,
    Laser,
    TapLatch,
    tap_service,
    tof_read,
)
from .settings import SimConfig

logger = logging.getLogger(__name__)

MOTOR_PRIORITY = 3
BATTERY_PRIORITY = 3
INFERENCE_PRIORITY = 2
SENSOR_PRIORITY = 1


class MotorMode(str, Enum):
    IDLE = "Idle"
    OPEN_HAND = "OpenHand"
    CLOSE_HAND = "CloseHand"


LEGAL_MOTOR_EDGES = frozenset(
    {
        (MotorMode.IDLE, MotorMode.OPEN_HAND),
        (MotorMode.OPEN_HAND, MotorMode.CLOSE_HAND),
        (MotorMode.OPEN_HAND, MotorMode.IDLE),
        (MotorMode.CLOSE_HAND, MotorMode.IDLE),
    }
)


@dataclass
class MotorState:
    value: MotorMode = MotorMode.IDLE
    open_entry_tick: Optional[int] = None


@dataclass(frozen=True)
class DebounceState:
    last_object_id: int = 0
    object_count: int = 0


def debounce_update(
    d: DebounceState,
    frame: DetectionFrame,
    motor: MotorState,
    *,
    frames_required: int = 6,
) -> Tuple[DebounceState, bool]:
    """Count consecutive frames of one nonzero id; fire once the run reaches `frames_required`.

    A new nonzero id restarts the run at this frame (count 1); id 0 empties it.
    """
    oid = frame.object_id
    if oid == 0:
        nxt = DebounceState(0, 0)
    elif oid == d.last_object_id:
        nxt = DebounceState(oid, d.object_count + 1)
    else:
        nxt = DebounceState(oid, 1)
    trigger = nxt.object_count >= frames_required and motor.value is not MotorMode.OPEN_HAND
    if trigger:
        nxt = DebounceState(oid, 0)
    return nxt, trigger


@dataclass
class SensorBuffers:
    range_mm: int = 255
    range_tick: int = 0
    accel: TapLatch = field(default_factory=TapLatch)


@dataclass
class RuntimeEstimatorState:
    samples: List[BatterySample] = field(default_factory=list)
    window_start_tick: Optional[int] = None
    cutoff_voltage: float = 9.0
    hibernate_threshold_min: float = 30.0
    window: int = 10
    last_estimate_min: Optional[float] = None


def estimate_runtime(
    samples: Sequence[BatterySample],
    elapsed_min: float,
    *,
    cutoff_voltage: float = 9.0,
    window: int = 10,
) -> Optional[float]:
    """Minutes until `cutoff_voltage` at the window's average discharge rate.

    None when the battery did not decline across the window.
    """
    if len(samples) != window:
        raise PreconditionError(f"estimator needs {window} samples, got {len(samples)}")
    if elapsed_min <= 0:
        raise PreconditionError(f"elapsed must be positive, got {elapsed_min}")
    v_first = samples[0].voltage
    v_last = samples[-1].voltage
    if v_first <= v_last:
        return None
    slope = (v_first - v_last) / elapsed_min
    return (v_last - cutoff_voltage) / slope


@dataclass
class Board:
    """Everything the tasks can touch outside their own state."""

    battery: BatteryState
    hand: HandPlant
    detector: Detector
    laser: Laser = field(default_factory=Laser)
    tap: TapLatch = field(default_factory=TapLatch)
    distance_mm: float = 255.0


EventSink = Callable[[str, str], None]


class Firmware:
    """The four control tasks, bound to one kernel and one board."""

    def __init__(self, kernel: Kernel, board: Board, config: SimConfig, emit: EventSink | None = None) -> None:
        self.kernel = kernel
        self.board = board
        self.config = config
        self._emit = emit or (lambda kind, detail: None)

        self.motor = MotorState()
        self.debounce = DebounceState()
        self.buffers = SensorBuffers()
        self.estimator = self._new_estimator()
        self.last_frame: Optional[DetectionFrame] = None
        self.hibernated_tick: Optional[int] = None
        self.motor_transitions: List[Tuple[int, MotorMode, MotorMode]] = []
        self._stale_warned = False

        self.motor_id = kernel.spawn_task("MotorTask", MOTOR_PRIORITY, self.motor_task_step)
        self.battery_id = kernel.spawn_task("BatteryTask", BATTERY_PRIORITY, self.battery_task_step)
        self.inference_id = kernel.spawn_task("InferenceTask", INFERENCE_PRIORITY, self.inference_task_step)
        self.sensor_id = kernel.spawn_task("SensorTask", SENSOR_PRIORITY, self.sensor_task_step)

    def _new_estimator(self) -> RuntimeEstimatorState:
        return RuntimeEstimatorState(
            cutoff_voltage=self.config.cutoff_voltage,
            hibernate_threshold_min=self.config.hibernate_threshold_min,
            window=self.config.estimator_window,
        )

    @property
    def now(self) -> int:
        return self.kernel.now

    def _set_motor(self, value: MotorMode) -> None:
        old = self.motor.value
        if (old, value) not in LEGAL_MOTOR_EDGES:
            raise AssertionError(f"illegal motor transition {old.value}->{value.value}")
        self.motor_transitions.append((self.now, old, value))
        self.motor.value = value
        self.motor.open_entry_tick = None
        logger.debug("motor_state tick=%s from=%s to=%s", self.now, old.value, value.value)

    # --- MotorTask -----------------------------------------------------------

    def motor_task_step(self) -> None:
        kernel = self.kernel
        mode = self.motor.value
        if mode is MotorMode.IDLE:
            kernel.wait_task(self.motor_id)
            return

        if mode is MotorMode.OPEN_HAND:
            if self.motor.open_entry_tick is None:
                kernel.set_task_state(self.inference_id, TaskState.SUSPENDED)
                self.board.hand.command("open")
                self.motor.open_entry_tick = self.now
            self._check_range_stale()
            if self.buffers.range_mm < self.config.range_threshold_mm:
                self.board.tap = tap_service(self.board.tap, "clear")
                self._set_motor(MotorMode.CLOSE_HAND)
                self.board.hand.command("close")
                self._emit("grasp", f"range_mm={self.buffers.range_mm}")
                kernel.delay_task(self.motor_id, self.config.motor_period_ms)
            elif self.now - self.motor.open_entry_tick >= self.config.open_timeout_ms:
                self._go_idle("timeout")
            else:
                kernel.delay_task(self.motor_id, self.config.motor_period_ms)
            return

        # CloseHand reads the latch register directly, not the SensorTask snapshot.
        if self.board.tap.latched:
            self._go_idle("release")
        else:
            kernel.delay_task(self.motor_id, self.config.motor_period_ms)

    def _go_idle(self, event: str) -> None:
        self.board.hand.command("rest")
        self._set_motor(MotorMode.IDLE)
        self.kernel.set_task_state(self.inference_id, TaskState.READY)
        self._emit(event, "")
        self.kernel.wait_task(self.motor_id)

    def _check_range_stale(self) -> None:
        age = self.now - self.buffers.range_tick
        if age > self.config.stale_range_ms:
            if not self._stale_warned:
                self._stale_warned = True
                self._emit("range_stale", f"age_ms={age}")
        else:
            self._stale_warned = False

    # --- InferenceTask -------------------------------------------------------

    def inference_task_step(self) -> None:
        detector = self.board.detector
        frame = detector.sample(self.now)
        if frame is not None:
            self.last_frame = frame
            if frame.object_id != 0 and self.debounce.last_object_id != 0:
                self.board.laser.on = False
            elif frame.object_id == 0 and self.motor.value is MotorMode.IDLE:
                self.board.laser.on = True

            self.debounce, trigger = debounce_update(
                self.debounce, frame, self.motor, frames_required=self.config.debounce_frames
            )
            if trigger:
                self.board.tap = tap_service(self.board.tap, "enable")
                self._set_motor(MotorMode.OPEN_HAND)
                self.kernel.notify_task(self.motor_id)
                self._emit("trigger", f"object_id={frame.object_id} frame={frame.index}")
        self.kernel.delay_task(self.inference_id, max(1, detector.next_available_tick() - self.now))

    # --- SensorTask ----------------------------------------------------------

    def sensor_task_step(self) -> None:
        self.buffers.range_mm = tof_read(self.board.distance_mm)
        self.buffers.range_tick = self.now
        self.buffers.accel = self.board.tap
        self.kernel.watchdog_kick()
        self.kernel.delay_task(self.sensor_id, self.config.poll_period_ms)

    # --- BatteryTask ---------------------------------------------------------

    def battery_task_step(self) -> None:
        est = self.estimator
        if est.window_start_tick is None:
            est.window_start_tick = self.now
        else:
            est.samples.append(BatterySample(self.board.battery.voltage, self.now))
            if len(est.samples) >= est.window:
                self._close_window()
        self.kernel.delay_task(self.battery_id, self.config.battery_period_ms)

    def _close_window(self) -> None:
        est = self.estimator
        elapsed_min = (self.now - est.window_start_tick) / 60_000.0
        estimate = estimate_runtime(
            est.samples, elapsed_min, cutoff_voltage=est.cutoff_voltage, window=est.window
        )
        est.last_estimate_min = estimate
        logger.info(
            "battery_estimate tick=%s v_first=%.4f v_last=%.4f runtime_min=%s",
            self.now,
            est.samples[0].voltage,
            est.samples[-1].voltage,
            "none" if estimate is None else f"{estimate:.2f}",
        )
        if estimate is not None and estimate < est.hibernate_threshold_min and self.hibernated_tick is None:
            self._hibernate(estimate)
        est.samples = []
        est.window_start_tick = self.now

    def _hibernate(self, estimate: float) -> None:
        self.hibernated_tick = self.now
        for task in self.kernel.tasks:
            if task.id != self.battery_id:
                self.kernel.set_task_state(task.id, TaskState.SUSPENDED)
        if self.config.hibernate_stops_watchdog:
            self.kernel.watchdog.enabled = False
        self._emit("hibernate", f"runtime_min={estimate:.2f}")

    # --- watchdog reset mode -------------------------------------------------

    def restart(self) -> bool:
        """Reboot firmware state after a watchdog reset; True if a grasp cycle was cut short."""
        aborted = self.motor.value is not MotorMode.IDLE
        self.motor = MotorState()
        self.debounce = DebounceState()
        self.buffers = SensorBuffers(range_tick=self.now)
        self.estimator = self._new_estimator()
        self.hibernated_tick = None
        self._stale_warned = False
        self.board.hand.command("rest")
        self.board.tap = TapLatch()
        self.board.laser.on = True
        self.kernel.reset()
        return aborted
