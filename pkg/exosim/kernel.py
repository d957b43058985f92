from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Tuple

from .errors import ConfigurationError, PreconditionError, TaskLookupError, TaskStateError

logger = logging.getLogger(__name__)

TICK_PERIOD_MS = 1
DEFAULT_WATCHDOG_TIMEOUT_MS = 8_000

StepFn = Callable[[], None]


class TaskState(str, Enum):
    READY = "Ready"
    RUNNING = "Running"
    BLOCKED = "Blocked"
    SUSPENDED = "Suspended"


@dataclass
class SimClock:
    tick_count: int = 0
    tick_period_ms: int = TICK_PERIOD_MS

    @property
    def time_seconds(self) -> float:
        return self.tick_count * self.tick_period_ms / 1000.0

    def ms_to_ticks(self, ms: float) -> int:
        return math.ceil(ms / self.tick_period_ms - 1e-9) if ms > 0 else 0


@dataclass
class TaskRecord:
    id: int
    name: str
    priority: int
    step: StepFn
    state: TaskState = TaskState.READY
    # None while Blocked means "waiting for notify_task"
    wake_tick: Optional[int] = None
    slices: int = 0


@dataclass
class ReadyLists:
    """Ready task ids per priority, in round-robin order (head runs next)."""

    lists: Dict[int, Deque[int]] = field(default_factory=dict)

    def insert(self, priority: int, task_id: int) -> None:
        self.lists.setdefault(priority, deque()).append(task_id)

    def remove(self, priority: int, task_id: int) -> None:
        queue = self.lists.get(priority)
        if queue is not None and task_id in queue:
            queue.remove(task_id)

    def rotate(self, priority: int, task_id: int) -> None:
        self.remove(priority, task_id)
        self.insert(priority, task_id)

    def contains(self, priority: int, task_id: int) -> bool:
        return task_id in self.lists.get(priority, ())

    def highest(self) -> Optional[int]:
        populated = [p for p, q in self.lists.items() if q]
        return max(populated) if populated else None

    def ids(self) -> List[int]:
        out: List[int] = []
        for priority in sorted(self.lists, reverse=True):
            out.extend(self.lists[priority])
        return out

    def copy(self) -> "ReadyLists":
        return ReadyLists({p: deque(q) for p, q in self.lists.items()})


def pick_next_task(ready: ReadyLists, last_run: Optional[int]) -> Optional[int]:
    priority = ready.highest()
    if priority is None:
        return None
    queue = ready.lists[priority]
    if queue[0] == last_run and len(queue) > 1:
        return queue[1]
    return queue[0]


@dataclass
class Watchdog:
    timeout: int = DEFAULT_WATCHDOG_TIMEOUT_MS
    last_kick_tick: int = 0
    expired: bool = False
    enabled: bool = True

    def kick(self, now: int) -> None:
        self.last_kick_tick = now

    def check(self, now: int) -> bool:
        return now - self.last_kick_tick >= self.timeout

    def expiry_tick(self) -> int:
        return self.last_kick_tick + self.timeout


@dataclass(frozen=True)
class KernelEvent:
    tick: int
    kind: str
    task: Optional[str] = None
    detail: str = ""


@dataclass(frozen=True)
class Selection:
    tick: int
    task_id: Optional[int]
    ready: Tuple[int, ...]


class Kernel:
    """Virtual-clock fixed-priority kernel; one task step per 1 ms tick."""

    def __init__(self, *, watchdog_timeout_ms: int = DEFAULT_WATCHDOG_TIMEOUT_MS) -> None:
        self.clock = SimClock()
        self.tasks: List[TaskRecord] = []
        self.ready = ReadyLists()
        self.watchdog = Watchdog(timeout=self.clock.ms_to_ticks(watchdog_timeout_ms))
        self.current: Optional[int] = None
        self.last_run: Optional[int] = None
        self.last_selection: Optional[Selection] = None
        self._pending: List[KernelEvent] = []
        self._by_name: Dict[str, int] = {}

    @property
    def now(self) -> int:
        return self.clock.tick_count

    def task(self, task_id: int) -> TaskRecord:
        if not isinstance(task_id, int) or task_id < 0 or task_id >= len(self.tasks):
            raise TaskLookupError(task_id)
        return self.tasks[task_id]

    def task_id(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise TaskLookupError(name) from None

    def spawn_task(self, name: str, priority: int, step: StepFn) -> int:
        if priority < 0:
            raise PreconditionError(f"priority must be >= 0, got {priority}")
        if name in self._by_name:
            raise ConfigurationError(f"duplicate task name {name!r}")
        task_id = len(self.tasks)
        self.tasks.append(TaskRecord(id=task_id, name=name, priority=priority, step=step))
        self._by_name[name] = task_id
        self.ready.insert(priority, task_id)
        logger.debug("kernel_task_spawn id=%s name=%s priority=%s", task_id, name, priority)
        return task_id

    def _emit(self, kind: str, task: Optional[TaskRecord] = None, detail: str = "") -> None:
        event = KernelEvent(self.now, kind, task.name if task else None, detail)
        self._pending.append(event)
        if kind == "task_switch":
            logger.debug("kernel_%s tick=%s task=%s", kind, self.now, event.task)
        else:
            logger.info("kernel_%s tick=%s task=%s %s", kind, self.now, event.task, detail)

    def _make_ready(self, task: TaskRecord) -> None:
        task.state = TaskState.READY
        task.wake_tick = None
        self.ready.rotate(task.priority, task.id)

    def _leave_ready(self, task: TaskRecord, state: TaskState) -> None:
        self.ready.remove(task.priority, task.id)
        task.state = state

    def delay_task(self, task_id: int, ms: float) -> None:
        task = self.task(task_id)
        if task.state not in (TaskState.RUNNING, TaskState.READY):
            raise TaskStateError(f"cannot delay {task.name} in state {task.state.value}")
        if ms < 0:
            raise PreconditionError(f"delay must be >= 0, got {ms}")
        self._leave_ready(task, TaskState.BLOCKED)
        task.wake_tick = self.now + self.clock.ms_to_ticks(ms)

    def wait_task(self, task_id: int) -> None:
        task = self.task(task_id)
        if task.state not in (TaskState.RUNNING, TaskState.READY):
            raise TaskStateError(f"cannot block {task.name} in state {task.state.value}")
        self._leave_ready(task, TaskState.BLOCKED)
        task.wake_tick = None

    def notify_task(self, task_id: int) -> None:
        task = self.task(task_id)
        if task.state is TaskState.BLOCKED:
            self._make_ready(task)

    def set_task_state(self, task_id: int, new: TaskState) -> None:
        task = self.task(task_id)
        if new is TaskState.SUSPENDED:
            if task.state is TaskState.SUSPENDED:
                return
            self._leave_ready(task, TaskState.SUSPENDED)
            task.wake_tick = None
            self._emit("task_suspend", task)
        elif new is TaskState.READY:
            if task.state is not TaskState.SUSPENDED:
                return
            self._make_ready(task)
            self._emit("task_resume", task)
        else:
            raise TaskStateError(f"set_task_state accepts Suspended or Ready, got {new.value}")

    def watchdog_kick(self, now: Optional[int] = None) -> None:
        self.watchdog.kick(self.now if now is None else now)

    def watchdog_check(self, now: Optional[int] = None) -> bool:
        return self.watchdog.check(self.now if now is None else now)

    def next_wake_tick(self) -> Optional[int]:
        wakes = [t.wake_tick for t in self.tasks if t.state is TaskState.BLOCKED and t.wake_tick is not None]
        return min(wakes) if wakes else None

    def has_ready(self) -> bool:
        return self.ready.highest() is not None

    def idle_until(self, tick: int) -> None:
        """Jump the clock to `tick` when nothing could have run in between."""
        if tick <= self.now:
            return
        if self.has_ready():
            raise PreconditionError("cannot fast-forward with Ready tasks")
        wake = self.next_wake_tick()
        if wake is not None and wake <= tick:
            raise PreconditionError(f"fast-forward to {tick} skips wake tick {wake}")
        if self.watchdog.enabled and not self.watchdog.expired and self.watchdog.expiry_tick() <= tick:
            raise PreconditionError(f"fast-forward to {tick} skips watchdog expiry")
        self.clock.tick_count = tick

    def _promote_due(self) -> None:
        due = [
            t
            for t in self.tasks
            if t.state is TaskState.BLOCKED and t.wake_tick is not None and t.wake_tick <= self.now
        ]
        for task in sorted(due, key=lambda t: (t.wake_tick, t.id)):
            self._make_ready(task)

    def advance_tick(self) -> List[KernelEvent]:
        self.clock.tick_count += 1
        self._promote_due()

        chosen = pick_next_task(self.ready, self.last_run)
        self.last_selection = Selection(self.now, chosen, tuple(self.ready.ids()))
        if chosen is not None:
            task = self.tasks[chosen]
            if chosen != self.last_run:
                self._emit("task_switch", task)
            task.state = TaskState.RUNNING
            task.slices += 1
            self.current = chosen
            try:
                task.step()
            except (TaskStateError, TaskLookupError) as exc:
                self._emit("fault", task, f"err={exc}")
            finally:
                self.current = None
            if task.state is TaskState.RUNNING:
                task.state = TaskState.READY
                self.ready.rotate(task.priority, task.id)
            self.last_run = chosen

        if self.watchdog.enabled and not self.watchdog.expired and self.watchdog_check():
            self.watchdog.expired = True
            self._emit("watchdog_expired", detail=f"last_kick={self.watchdog.last_kick_tick}")

        events, self._pending = self._pending, []
        return events

    def drain_events(self) -> List[KernelEvent]:
        events, self._pending = self._pending, []
        return events

    def reset(self) -> None:
        """Restart every task as Ready (watchdog reset mode); the clock keeps running."""
        self.ready = ReadyLists()
        for task in self.tasks:
            task.state = TaskState.READY
            task.wake_tick = None
            self.ready.insert(task.priority, task.id)
        self.current = None
        self.last_run = None
        self.watchdog.expired = False
        self.watchdog.enabled = True
        self.watchdog.kick(self.now)
        logger.warning("kernel_reset tick=%s", self.now)
