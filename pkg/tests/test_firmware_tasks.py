import numpy as np
import pytest

from exosim.firmware import Board, Firmware, MotorMode
from exosim.kernel import Kernel, TaskState
from exosim.peripherals import NOTHING_VISIBLE, BatteryState, Detector, HandPlant, HandState, Visibility, tap_service
from exosim.settings import SimConfig


def _firmware(*, visible=True, distance=120.0, config=None):
    seen = Visibility(4, 0.9, 1.0) if visible else NOTHING_VISIBLE
    config = config or SimConfig()
    kernel = Kernel(watchdog_timeout_ms=config.watchdog_timeout_ms)
    detector = Detector(
        period_ticks=config.frame_period_ticks,
        latency_ticks=config.latency_ticks,
        rng=np.random.default_rng(0),
        visibility=lambda tick: seen,
    )
    board = Board(battery=BatteryState(), hand=HandPlant(), detector=detector, distance_mm=distance)
    events = []
    fw = Firmware(kernel, board, config, emit=lambda kind, detail: events.append((kernel.now, kind)))
    return kernel, fw, events


def _run_to(kernel, tick, each=None):
    while kernel.now < tick:
        kernel.advance_tick()
        if each is not None:
            each()


def test_tasks_spawn_in_priority_order():
    kernel, fw, _ = _firmware()

    names = [(t.name, t.priority) for t in kernel.tasks]

    assert names == [("MotorTask", 3), ("BatteryTask", 3), ("InferenceTask", 2), ("SensorTask", 1)]
    assert (fw.motor_id, fw.battery_id, fw.inference_id, fw.sensor_id) == (0, 1, 2, 3)


def test_sixth_visible_frame_triggers_at_551():
    kernel, fw, events = _firmware()

    _run_to(kernel, 550)
    assert fw.motor.value is MotorMode.IDLE
    _run_to(kernel, 551)

    assert events == [(551, "trigger")]
    assert fw.motor.value is MotorMode.OPEN_HAND
    assert fw.board.tap.enabled is True


def test_motor_task_opens_hand_and_suspends_inference_on_entry():
    kernel, fw, _ = _firmware()

    _run_to(kernel, 552)

    assert fw.motor.open_entry_tick == 552
    assert fw.board.hand.state is HandState.OPENING
    assert kernel.task(fw.inference_id).state is TaskState.SUSPENDED


def test_close_range_grasps_then_tap_releases():
    kernel, fw, events = _firmware(distance=25.0)

    _run_to(kernel, 552)
    assert fw.motor.value is MotorMode.CLOSE_HAND
    assert fw.board.hand.state is HandState.CLOSING

    fw.board.tap = tap_service(fw.board.tap, "tap")
    _run_to(kernel, 652)

    assert [kind for _, kind in events] == ["trigger", "grasp", "release"]
    assert events[-1][0] == 652
    assert fw.motor.value is MotorMode.IDLE
    assert fw.board.hand.state is HandState.REST
    assert kernel.task(fw.inference_id).state is not TaskState.SUSPENDED


def test_open_hand_times_out_after_ten_seconds():
    kernel, fw, events = _firmware(distance=120.0)

    _run_to(kernel, 10_552)

    assert (10_552, "timeout") in events
    assert fw.motor.value is MotorMode.IDLE
    assert [m for m in fw.motor_transitions] == [
        (551, MotorMode.IDLE, MotorMode.OPEN_HAND),
        (10_552, MotorMode.OPEN_HAND, MotorMode.IDLE),
    ]


def test_laser_turns_off_on_second_consecutive_detection():
    kernel, fw, _ = _firmware()

    _run_to(kernel, 51)
    assert fw.board.laser.on is True
    _run_to(kernel, 151)

    assert fw.board.laser.on is False


def test_laser_stays_on_with_nothing_in_view():
    kernel, fw, events = _firmware(visible=False)

    _run_to(kernel, 2_000)

    assert fw.board.laser.on is True
    assert events == []


def test_sensor_task_samples_range_and_kicks_watchdog():
    kernel, fw, _ = _firmware(distance=87.4)

    _run_to(kernel, 4)

    assert fw.buffers.range_mm == 87
    assert fw.buffers.range_tick == 4
    assert kernel.watchdog.last_kick_tick == 4
    assert kernel.task(fw.sensor_id).wake_tick == 54


def test_sensor_task_snapshots_the_tap_latch():
    kernel, fw, _ = _firmware()
    fw.board.tap = tap_service(tap_service(fw.board.tap, "enable"), "tap")

    _run_to(kernel, 3)
    assert fw.buffers.accel.latched is False

    _run_to(kernel, 4)
    assert fw.buffers.accel.latched is True


def test_stale_range_warns_once():
    kernel, fw, events = _firmware()
    kernel.set_task_state(fw.sensor_id, TaskState.SUSPENDED)

    _run_to(kernel, 3_000)

    stale = [tick for tick, kind in events if kind == "range_stale"]
    assert stale == [1_052]


def test_illegal_motor_transition_is_an_assertion():
    _, fw, _ = _firmware()

    with pytest.raises(AssertionError):
        fw._set_motor(MotorMode.CLOSE_HAND)


def _drain(fw, current_ma):
    return lambda: fw.board.battery.consume(current_ma, 0.001)


def test_battery_task_hibernates_on_short_runtime_estimate():
    config = SimConfig(battery_period_ms=1_000)
    kernel, fw, events = _firmware(visible=False, config=config)

    _run_to(kernel, 10_002, each=_drain(fw, 7_200.0))

    assert (10_002, "hibernate") in events
    assert fw.hibernated_tick == 10_002
    assert fw.estimator.last_estimate_min == pytest.approx(16.0, abs=0.5)
    for task_id in (fw.motor_id, fw.inference_id, fw.sensor_id):
        assert kernel.task(task_id).state is TaskState.SUSPENDED
    assert kernel.watchdog.enabled is False


def test_battery_task_with_flat_voltage_does_not_hibernate():
    config = SimConfig(battery_period_ms=1_000)
    kernel, fw, events = _firmware(visible=False, config=config)

    _run_to(kernel, 10_002)

    assert fw.estimator.last_estimate_min is None
    assert fw.hibernated_tick is None
    assert fw.estimator.samples == []
    assert fw.estimator.window_start_tick == 10_002


def test_restart_reports_an_aborted_cycle():
    kernel, fw, _ = _firmware()
    _run_to(kernel, 600)

    assert fw.restart() is True
    assert fw.motor.value is MotorMode.IDLE
    assert all(t.state is TaskState.READY for t in kernel.tasks)
    assert kernel.watchdog.last_kick_tick == 600
