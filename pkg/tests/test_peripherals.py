import itertools

import pytest

from exosim.peripherals import (
    BatteryState,
    CAPACITY_MAH,
    HandPlant,
    HandState,
    TapLatch,
    battery_step,
    plant_command,
    plant_step,
    system_current,
    tap_service,
    tof_read,
)


def test_battery_three_hours_at_230ma_reads_11_35():
    end = battery_step(BatteryState(), 230.0, 3 * 3600.0)

    assert end.consumed == pytest.approx(690.0)
    assert f"{end.voltage:.2f}" == "11.35"


def test_battery_step_is_pure():
    start = BatteryState()
    battery_step(start, 500.0, 60.0)

    assert start.consumed == 0.0


def test_battery_consumed_clamps_at_capacity():
    end = battery_step(BatteryState(), 1_000.0, 10 * 3600.0)

    assert end.consumed == CAPACITY_MAH
    assert f"{end.voltage:.2f}" == "9.99"


def test_battery_zero_dt_is_identity():
    start = BatteryState(consumed=12.5)

    assert battery_step(start, 625.0, 0.0) == start


def test_battery_rejects_negative_inputs():
    with pytest.raises(ValueError):
        battery_step(BatteryState(), -1.0, 1.0)
    with pytest.raises(ValueError):
        battery_step(BatteryState(), 1.0, -1.0)


def test_battery_from_voltage_round_trips_the_linear_model():
    state = BatteryState.from_voltage(12.0)

    assert state.voltage == pytest.approx(12.0)


@pytest.mark.parametrize(
    ("distance", "expected"),
    [(0.0, 0), (24.4, 24), (24.5, 25), (29.6, 30), (255.0, 255), (400.0, 255)],
)
def test_tof_read_rounds_half_up_and_saturates(distance, expected):
    assert tof_read(distance) == expected


def test_tof_read_rejects_negative_distance():
    with pytest.raises(ValueError):
        tof_read(-0.1)


def _latched_by_hand(events):
    enabled = False
    latched = False
    for ev in events:
        if ev == "tap" and enabled:
            latched = True
        elif ev == "clear":
            latched = False
        elif ev == "enable":
            enabled = True
        elif ev == "disable":
            enabled = False
    return enabled, latched


@pytest.mark.parametrize("events", list(itertools.product(("tap", "clear", "enable", "disable"), repeat=3)))
def test_tap_latch_every_three_event_sequence(events):
    latch = TapLatch()
    for ev in events:
        latch = tap_service(latch, ev)

    assert (latch.enabled, latch.latched) == _latched_by_hand(events)


def test_tap_while_disabled_is_ignored():
    assert tap_service(TapLatch(), "tap").latched is False


def test_tap_latch_survives_disable_until_cleared():
    latch = tap_service(tap_service(TapLatch(enabled=True), "tap"), "disable")

    assert latch.latched is True
    assert tap_service(latch, "clear").latched is False


def test_plant_opens_after_two_seconds():
    hand = plant_command(HandPlant(), "open")

    assert plant_step(hand, 1_999).state is HandState.OPENING
    assert plant_step(hand, 2_000).state is HandState.OPEN


def test_plant_close_then_rest():
    hand = plant_step(plant_command(HandPlant(), "close"), 2_500)
    assert hand.state is HandState.CLOSED

    assert plant_command(hand, "rest").state is HandState.REST


def test_plant_command_restarts_transition():
    hand = plant_step(plant_command(HandPlant(), "open"), 1_500)
    hand = plant_command(hand, "close")

    assert hand.transition_elapsed_ms == 0
    assert hand.remaining_ms() == 2_000


def test_plant_step_is_pure():
    hand = plant_command(HandPlant(), "open")
    plant_step(hand, 500)

    assert hand.transition_elapsed_ms == 0


@pytest.mark.parametrize(
    ("state", "expected"),
    [
        (HandState.REST, 100.0),
        (HandState.OPENING, 250.0),
        (HandState.OPEN, 100.0),
        (HandState.CLOSING, 625.0),
        (HandState.CLOSED, 230.0),
    ],
)
def test_system_current_follows_hand_state(state, expected):
    assert system_current(None, HandPlant(state=state)) == expected
