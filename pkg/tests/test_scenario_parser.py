from pathlib import Path

import pytest

from exosim.errors import PreconditionError, ScenarioParseError
from exosim.scenario import check_scenario, compile_timeline, env_at, format_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_minimal_file_parses():
    s = parse_scenario("at 0 object cup score=0.9 prob=1.0\nat 5 tap\nat 10 end")

    assert len(s.events) == 3
    assert s.duration == 10.0
    assert s.end_tick == 10_000
    assert s.events[0].object_id == 4
    assert s.seed is None
    assert s.initial.battery_v == 12.89


def test_events_are_sorted_by_time_keeping_file_order_for_ties():
    s = parse_scenario("at 3 tap\nat 1 distance 50\nat 1 distance 60\nat 4 end")

    assert [(e.at, e.kind, e.distance) for e in s.events] == [
        (1.0, "distance", 50.0),
        (1.0, "distance", 60.0),
        (3.0, "tap", None),
        (4.0, "end", None),
    ]


def test_headers_set_battery_slope_and_seed():
    s = parse_scenario("battery 12.0 slope=0.042\nseed 77\nat 10 end\n")

    assert s.initial.battery_v == 12.0
    assert s.battery_slope == 0.042
    assert s.seed == 77


def test_comments_and_blank_lines_are_ignored():
    s = parse_scenario("# header\n\nat 0 clear   # nothing yet\nat 1 end\n")

    assert [e.kind for e in s.events] == ["clear", "end"]


def test_unknown_object_reports_line_and_column():
    with pytest.raises(ScenarioParseError) as excinfo:
        parse_scenario("at 1 object rocket")

    (diag,) = excinfo.value.diagnostics
    assert (diag.line, diag.column) == (1, 13)
    assert str(diag) == "unknown object 'rocket' (line 1, column 13)"


def test_all_errors_are_collected():
    text = "\n".join(
        [
            "at 0 object cup",
            "jump 3",
            "at 1 distance -4",
            "at 2 object pen score=1.5",
            "at 5 end",
            "at 6 tap",
        ]
    )

    diags = check_scenario(text)

    assert [(d.line, d.message) for d in diags] == [
        (2, "unknown keyword 'jump'"),
        (3, "distance out of range '-4'"),
        (4, "score out of range '1.5'"),
        (6, "event at 6.0 s after 'end' at 5.0 s"),
    ]


def test_duplicate_end_is_an_error():
    diags = check_scenario("at 5 end\nat 5 end\n")

    assert [(d.line, d.message) for d in diags] == [(2, "duplicate 'end'")]


def test_battery_above_full_charge_is_out_of_range():
    diags = check_scenario("battery 14\nat 1 end\n")

    assert diags[0].message == "battery voltage out of range '14'"


def test_ramp_requires_over_keyword():
    diags = check_scenario("at 2 distance ramp 120 25 3\nat 9 end")

    assert diags[0].message == "expected 'over'"


def test_valid_file_has_no_diagnostics():
    assert check_scenario((SCENARIOS / "grasp.esc").read_text()) == []


@pytest.mark.parametrize("name", ["grasp.esc", "timeout.esc", "hibernate.esc", "idle8h.esc"])
def test_format_then_parse_gives_the_same_scenario(name):
    s = parse_scenario((SCENARIOS / name).read_text())

    again = parse_scenario(format_scenario(s))

    assert again == s


def test_ramp_midpoint_and_exact_endpoints():
    s = parse_scenario("at 0 distance 120\nat 2 distance ramp 120 25 over 3\nat 10 end")

    assert env_at(s, 1.0).true_distance == 120.0
    assert env_at(s, 2.0).true_distance == 120.0
    assert env_at(s, 3.5).true_distance == pytest.approx(72.5)
    assert env_at(s, 5.0).true_distance == 25.0
    assert env_at(s, 8.0).true_distance == 25.0


def test_light_scales_detection_probability():
    s = parse_scenario("at 0 object cup prob=0.8\nat 1 light 0.5\nat 5 end")

    assert env_at(s, 0.5).detect_prob == pytest.approx(0.8)
    assert env_at(s, 2.0).detect_prob == pytest.approx(0.4)


def test_nothing_visible_before_first_object():
    s = parse_scenario("at 2 object ball\nat 3 clear\nat 5 end")

    assert env_at(s, 1.0).visible_object is None
    assert env_at(s, 2.5).visible_object == 1
    assert env_at(s, 3.0).visible_object is None


def test_tap_pending_only_on_its_tick():
    s = parse_scenario("at 5 tap\nat 6 end")
    timeline = compile_timeline(s)

    assert env_at(s, 5.0, timeline).tap_pending is True
    assert env_at(s, 5.001, timeline).tap_pending is False
    assert timeline.tap_ticks == [5_000]


def test_env_at_is_pure():
    s = parse_scenario((SCENARIOS / "grasp.esc").read_text())

    assert env_at(s, 3.3) == env_at(s, 3.3)


def test_env_at_outside_the_scenario_is_precondition_error():
    s = parse_scenario("at 5 end")

    with pytest.raises(PreconditionError):
        env_at(s, -0.001)
    with pytest.raises(PreconditionError):
        env_at(s, 5.5)
