from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Literal, NamedTuple, Optional

import numpy as np

if TYPE_CHECKING:
    from .firmware import MotorState

logger = logging.getLogger(__name__)

CAPACITY_MAH = 1300.0
V_FULL = 12.89
# 1.54 V drop over 690 mAh (230 mA for 3 h)
SLOPE_V_PER_MAH = 2.2319e-3
TOF_MAX_RANGE_MM = 255
OBJECT_NAMES = ("ball", "bottle", "cube", "cup", "pen", "spoon")


# --- battery -----------------------------------------------------------------


@dataclass
class BatteryState:
    capacity: float = CAPACITY_MAH
    consumed: float = 0.0
    v_full: float = V_FULL
    slope_k: float = SLOPE_V_PER_MAH

    @property
    def voltage(self) -> float:
        return self.v_full - self.slope_k * self.consumed

    @classmethod
    def from_voltage(cls, v0: float, *, slope_k: float = SLOPE_V_PER_MAH, v_full: float = V_FULL) -> "BatteryState":
        consumed = (v_full - v0) / slope_k
        return cls(consumed=min(max(consumed, 0.0), CAPACITY_MAH), v_full=v_full, slope_k=slope_k)

    def consume(self, current_ma: float, dt_s: float) -> None:
        if current_ma <= 0 or dt_s <= 0:
            return
        self.consumed = min(self.capacity, self.consumed + current_ma * dt_s / 3600.0)


def battery_step(b: BatteryState, current_ma: float, dt_s: float) -> BatteryState:
    """Coulomb-count `current_ma` over `dt_s` seconds; returns a new state."""
    if current_ma < 0 or dt_s < 0:
        raise ValueError("current and dt must be non-negative")
    out = replace(b)
    out.consume(current_ma, dt_s)
    return out


@dataclass(frozen=True)
class BatterySample:
    voltage: float
    tick: int


# --- time-of-flight ranger ---------------------------------------------------


def tof_read(true_distance: float, max_range: int = TOF_MAX_RANGE_MM) -> int:
    if true_distance < 0:
        raise ValueError(f"distance must be >= 0, got {true_distance}")
    return int(math.floor(min(true_distance, max_range) + 0.5))


# --- tap latch ---------------------------------------------------------------

TapEvent = Literal["tap", "clear", "enable", "disable"]


@dataclass(frozen=True)
class TapLatch:
    enabled: bool = False
    latched: bool = False


def tap_service(latch: TapLatch, event: TapEvent) -> TapLatch:
    if event == "tap":
        return replace(latch, latched=latch.latched or latch.enabled)
    if event == "clear":
        return replace(latch, latched=False)
    if event == "enable":
        return replace(latch, enabled=True)
    if event == "disable":
        return replace(latch, enabled=False)
    raise ValueError(f"unknown tap event {event!r}")


# --- detector stub -----------------------------------------------------------


class Visibility(NamedTuple):
    object_id: Optional[int]
    score: float
    detect_prob: float


NOTHING_VISIBLE = Visibility(None, 0.0, 0.0)


@dataclass(frozen=True)
class DetectionFrame:
    object_id: int
    score: float
    frame_tick: int
    available_tick: int
    index: int


class Detector:
    """Free-running camera: frame n is captured at n*period and readable latency ticks later.

    Exactly one uniform draw is taken per captured frame, in capture order,
    whether or not the consumer ever reads that frame.
    """

    def __init__(
        self,
        *,
        period_ticks: int,
        latency_ticks: int,
        rng: np.random.Generator,
        visibility: Callable[[int], Visibility],
    ) -> None:
        if period_ticks <= 0:
            raise ValueError("frame period must be positive")
        self.period = period_ticks
        self.latency = latency_ticks
        self.rng = rng
        self.visibility = visibility
        self.next_index = 0
        self._drawn = 0

    def newest_available(self, now: int) -> int:
        """Index of the newest frame readable at `now`, or -1."""
        if now < self.latency:
            return -1
        return (now - self.latency) // self.period

    def available_tick(self, index: int) -> int:
        return index * self.period + self.latency

    def next_available_tick(self) -> int:
        return self.available_tick(self.next_index)

    def _draw_through(self, index: int) -> float:
        count = index + 1 - self._drawn
        draws = self.rng.random(count)
        self._drawn = index + 1
        return float(draws[-1])

    def sample(self, now: int) -> Optional[DetectionFrame]:
        newest = self.newest_available(now)
        if newest < self.next_index:
            return None
        capture = newest * self.period
        u = self._draw_through(newest)
        seen = self.visibility(capture)
        self.next_index = newest + 1
        if seen.object_id and u < seen.detect_prob:
            frame = DetectionFrame(seen.object_id, seen.score, capture, self.available_tick(newest), newest)
        else:
            frame = DetectionFrame(0, 0.0, capture, self.available_tick(newest), newest)
        return frame


def detector_sample(detector: Detector, now: int) -> Optional[DetectionFrame]:
    """Newest unread frame available at `now`; None while pending."""
    return detector.sample(now)


# --- pneumatic hand plant ----------------------------------------------------


class HandState(str, Enum):
    REST = "Rest"
    OPENING = "Opening"
    OPEN = "Open"
    CLOSING = "Closing"
    CLOSED = "Closed"


PlantCommand = Literal["open", "close", "rest"]


@dataclass
class HandPlant:
    state: HandState = HandState.REST
    transition_elapsed_ms: int = 0
    t_open_ms: int = 2_000
    t_close_ms: int = 2_000

    def command(self, cmd: PlantCommand) -> None:
        if cmd == "open":
            self.state = HandState.OPENING
        elif cmd == "close":
            self.state = HandState.CLOSING
        elif cmd == "rest":
            self.state = HandState.REST
        else:
            raise ValueError(f"unknown plant command {cmd!r}")
        self.transition_elapsed_ms = 0

    def remaining_ms(self) -> Optional[int]:
        if self.state is HandState.OPENING:
            return max(0, self.t_open_ms - self.transition_elapsed_ms)
        if self.state is HandState.CLOSING:
            return max(0, self.t_close_ms - self.transition_elapsed_ms)
        return None

    def advance(self, dt_ms: int) -> None:
        if self.state is HandState.OPENING:
            self.transition_elapsed_ms += dt_ms
            if self.transition_elapsed_ms >= self.t_open_ms:
                self.state = HandState.OPEN
        elif self.state is HandState.CLOSING:
            self.transition_elapsed_ms += dt_ms
            if self.transition_elapsed_ms >= self.t_close_ms:
                self.state = HandState.CLOSED


def plant_command(h: HandPlant, cmd: PlantCommand) -> HandPlant:
    out = replace(h)
    out.command(cmd)
    return out


def plant_step(h: HandPlant, dt_ms: int) -> HandPlant:
    out = replace(h)
    out.advance(dt_ms)
    return out


# --- current draw ------------------------------------------------------------


@dataclass(frozen=True)
class CurrentProfile:
    idle: float = 100.0
    opening: float = 250.0
    closing: float = 625.0
    holding: float = 230.0


DEFAULT_PROFILE = CurrentProfile()


def system_current(
    motor_state: "MotorState | None",
    hand: HandPlant,
    profile: CurrentProfile = DEFAULT_PROFILE,
) -> float:
    state = hand.state
    if state is HandState.OPENING:
        return profile.opening
    if state is HandState.CLOSING:
        return profile.closing
    if state is HandState.CLOSED:
        return profile.holding
    return profile.idle


@dataclass
class Laser:
    on: bool = True
