from __future__ import annotations

import bisect
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Tuple

from .errors import PreconditionError, ScenarioDiagnostic, ScenarioParseError
from .peripherals import NOTHING_VISIBLE, OBJECT_NAMES, TOF_MAX_RANGE_MM, V_FULL, Visibility

logger = logging.getLogger(__name__)

EventKind = Literal["object", "clear", "distance", "ramp", "tap", "light", "end"]

OBJECT_IDS: Dict[str, int] = {name: n for n, name in enumerate(OBJECT_NAMES, start=1)}
MIN_BATTERY_V = 9.0
_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class ScenarioEvent:
    at: float
    kind: EventKind
    object_id: Optional[int] = None
    score: float = 1.0
    prob: float = 1.0
    distance: Optional[float] = None
    ramp_to: Optional[float] = None
    ramp_over: Optional[float] = None
    light: Optional[float] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class InitialConditions:
    battery_v: float = V_FULL
    distance: float = float(TOF_MAX_RANGE_MM)


@dataclass(frozen=True)
class Scenario:
    events: Tuple[ScenarioEvent, ...]
    duration: float
    initial: InitialConditions = InitialConditions()
    seed: Optional[int] = None
    battery_slope: Optional[float] = None
    battery_declared: bool = False

    @property
    def end_tick(self) -> int:
        return int(round(self.duration * 1000))


@dataclass(frozen=True)
class EnvState:
    visible_object: Optional[int]
    detect_prob: float
    true_distance: float
    tap_pending: bool
    score: float = 0.0


# --- parsing -----------------------------------------------------------------


class _LineParser:
    def __init__(self, line_no: int, tokens: List[Tuple[int, str]], diags: List[ScenarioDiagnostic]) -> None:
        self.line_no = line_no
        self.tokens = tokens
        self.diags = diags
        self.ok = True

    def error(self, column: int, message: str) -> None:
        self.ok = False
        self.diags.append(ScenarioDiagnostic(self.line_no, column, message))

    def number(self, idx: int, what: str, *, lo: float | None = None, hi: float | None = None, open_lo: bool = False) -> Optional[float]:
        if idx >= len(self.tokens):
            col = self.tokens[-1][0] + len(self.tokens[-1][1]) + 1 if self.tokens else 1
            self.error(col, f"missing {what}")
            return None
        col, raw = self.tokens[idx]
        return self.value(col, raw, what, lo=lo, hi=hi, open_lo=open_lo)

    def value(self, col: int, raw: str, what: str, *, lo: float | None = None, hi: float | None = None, open_lo: bool = False) -> Optional[float]:
        try:
            value = float(raw)
        except ValueError:
            self.error(col, f"invalid {what} '{raw}'")
            return None
        if not math.isfinite(value):
            self.error(col, f"invalid {what} '{raw}'")
            return None
        too_low = lo is not None and (value <= lo if open_lo else value < lo)
        too_high = hi is not None and value > hi
        if too_low or too_high:
            self.error(col, f"{what} out of range '{raw}'")
            return None
        return value

    def no_more(self, idx: int) -> None:
        if idx < len(self.tokens):
            col, raw = self.tokens[idx]
            self.error(col, f"unexpected token '{raw}'")


def _tokens(line: str) -> List[Tuple[int, str]]:
    body = line.split("#", 1)[0]
    return [(m.start() + 1, m.group(0)) for m in _TOKEN.finditer(body)]


def _parse_object(p: _LineParser, at: float) -> Optional[ScenarioEvent]:
    if len(p.tokens) < 4:
        p.error(p.tokens[2][0] + len(p.tokens[2][1]) + 1, "missing object name")
        return None
    col, raw = p.tokens[3]
    object_id: Optional[int] = None
    if raw.lower() in OBJECT_IDS:
        object_id = OBJECT_IDS[raw.lower()]
    elif raw.isdigit() and 1 <= int(raw) <= len(OBJECT_NAMES):
        object_id = int(raw)
    else:
        p.error(col, f"unknown object '{raw}'")
    options = {"score": 1.0, "prob": 1.0}
    seen: set[str] = set()
    for ocol, token in p.tokens[4:]:
        key, sep, val = token.partition("=")
        if not sep or key not in options:
            p.error(ocol, f"unknown option '{token}'")
            continue
        if key in seen:
            p.error(ocol, f"duplicate option '{key}'")
            continue
        seen.add(key)
        parsed = p.value(ocol + len(key) + 1, val, key, lo=0.0, hi=1.0)
        if parsed is not None:
            options[key] = parsed
    if not p.ok or object_id is None:
        return None
    return ScenarioEvent(at, "object", object_id=object_id, score=options["score"], prob=options["prob"], line=p.line_no)


def _parse_distance(p: _LineParser, at: float) -> Optional[ScenarioEvent]:
    if len(p.tokens) > 3 and p.tokens[3][1] == "ramp":
        start = p.number(4, "distance", lo=0.0)
        stop = p.number(5, "distance", lo=0.0)
        if len(p.tokens) <= 6 or p.tokens[6][1] != "over":
            col = p.tokens[6][0] if len(p.tokens) > 6 else p.tokens[-1][0] + len(p.tokens[-1][1]) + 1
            p.error(col, "expected 'over'")
            return None
        over = p.number(7, "ramp duration", lo=0.0, open_lo=True)
        p.no_more(8)
        if not p.ok:
            return None
        return ScenarioEvent(at, "ramp", distance=start, ramp_to=stop, ramp_over=over, line=p.line_no)
    value = p.number(3, "distance", lo=0.0)
    p.no_more(4)
    if not p.ok:
        return None
    return ScenarioEvent(at, "distance", distance=value, line=p.line_no)


def _parse_header(p: _LineParser, headers: Dict[str, object]) -> None:
    col, keyword = p.tokens[0]
    if keyword in headers:
        p.error(col, f"duplicate '{keyword}' directive")
        return
    if keyword == "seed":
        if len(p.tokens) < 2:
            p.error(col + len(keyword) + 1, "missing seed")
            return
        scol, raw = p.tokens[1]
        if not raw.isdigit() or int(raw) >= 2**64:
            p.error(scol, f"invalid seed '{raw}'")
            return
        p.no_more(2)
        if p.ok:
            headers["seed"] = int(raw)
        return
    volts = p.number(1, "battery voltage", lo=MIN_BATTERY_V, hi=V_FULL, open_lo=True)
    slope: Optional[float] = None
    for ocol, token in p.tokens[2:]:
        key, sep, val = token.partition("=")
        if key != "slope" or not sep:
            p.error(ocol, f"unknown option '{token}'")
            continue
        slope = p.value(ocol + len(key) + 1, val, "slope", lo=0.0, open_lo=True)
    if p.ok:
        headers["battery"] = (volts, slope)


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; raises ScenarioParseError carrying every diagnostic found."""
    diags: List[ScenarioDiagnostic] = []
    events: List[ScenarioEvent] = []
    headers: Dict[str, object] = {}

    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = _tokens(line)
        if not tokens:
            continue
        p = _LineParser(line_no, tokens, diags)
        col, keyword = tokens[0]
        if keyword in ("battery", "seed"):
            _parse_header(p, headers)
            continue
        if keyword != "at":
            p.error(col, f"unknown keyword '{keyword}'")
            continue
        at = p.number(1, "time", lo=0.0)
        if len(tokens) < 3:
            if at is not None:
                p.error(tokens[-1][0] + len(tokens[-1][1]) + 1, "missing event")
            continue
        kcol, kind = tokens[2]
        if at is None:
            continue
        event: Optional[ScenarioEvent] = None
        if kind == "object":
            event = _parse_object(p, at)
        elif kind == "distance":
            event = _parse_distance(p, at)
        elif kind == "light":
            mult = p.number(3, "light multiplier", lo=0.0, hi=1.0)
            p.no_more(4)
            if p.ok:
                event = ScenarioEvent(at, "light", light=mult, line=line_no)
        elif kind in ("clear", "tap", "end"):
            p.no_more(3)
            if p.ok:
                event = ScenarioEvent(at, kind, line=line_no)  # type: ignore[arg-type]
        else:
            p.error(kcol, f"unknown keyword '{kind}'")
        if event is not None:
            events.append(event)

    ends = [e for e in events if e.kind == "end"]
    for extra in ends[1:]:
        diags.append(ScenarioDiagnostic(extra.line, 1, "duplicate 'end'"))
    if ends:
        end_at = ends[0].at
        for e in events:
            if e.kind != "end" and e.at > end_at:
                diags.append(ScenarioDiagnostic(e.line, 1, f"event at {e.at!r} s after 'end' at {end_at!r} s"))

    if diags:
        diags.sort(key=lambda d: (d.line, d.column))
        logger.info("scenario_parse_failed errors=%s", len(diags))
        raise ScenarioParseError(diags)

    ordered = tuple(sorted(events, key=lambda e: e.at))
    duration = ends[0].at if ends else (ordered[-1].at if ordered else 0.0)
    battery = headers.get("battery")
    volts, slope = battery if battery else (V_FULL, None)  # type: ignore[misc]
    return Scenario(
        events=ordered,
        duration=duration,
        initial=InitialConditions(battery_v=volts),
        seed=headers.get("seed"),  # type: ignore[arg-type]
        battery_slope=slope,
        battery_declared=battery is not None,
    )


def check_scenario(text: str) -> List[ScenarioDiagnostic]:
    try:
        parse_scenario(text)
    except ScenarioParseError as exc:
        return exc.diagnostics
    return []


# --- printing ----------------------------------------------------------------


def _format_event(e: ScenarioEvent) -> str:
    head = f"at {e.at!r}"
    if e.kind == "object":
        return f"{head} object {OBJECT_NAMES[e.object_id - 1]} score={e.score!r} prob={e.prob!r}"
    if e.kind == "distance":
        return f"{head} distance {e.distance!r}"
    if e.kind == "ramp":
        return f"{head} distance ramp {e.distance!r} {e.ramp_to!r} over {e.ramp_over!r}"
    if e.kind == "light":
        return f"{head} light {e.light!r}"
    return f"{head} {e.kind}"


def format_scenario(s: Scenario) -> str:
    lines: List[str] = []
    if s.battery_declared:
        header = f"battery {s.initial.battery_v!r}"
        if s.battery_slope is not None:
            header += f" slope={s.battery_slope!r}"
        lines.append(header)
    if s.seed is not None:
        lines.append(f"seed {s.seed}")
    lines.extend(_format_event(e) for e in s.events)
    return "\n".join(lines) + "\n"


# --- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class _Snapshot:
    visible: Optional[int]
    score: float
    prob: float
    light: float
    distance: float
    ramp: Optional[Tuple[float, float, float, float]]  # start time, from, to, over


class Timeline:
    """Scenario folded into snapshots at each event time; lookups are a bisect."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.times: List[float] = []
        self.snapshots: List[_Snapshot] = []
        self.tap_ticks: List[int] = sorted(int(round(e.at * 1000)) for e in scenario.events if e.kind == "tap")
        self._tap_set = set(self.tap_ticks)

        state = _Snapshot(None, 0.0, 0.0, 1.0, scenario.initial.distance, None)
        self._initial = state
        for e in scenario.events:
            if e.kind == "object":
                state = replace(state, visible=e.object_id, score=e.score, prob=e.prob)
            elif e.kind == "clear":
                state = replace(state, visible=None, score=0.0, prob=0.0)
            elif e.kind == "distance":
                state = replace(state, distance=e.distance, ramp=None)
            elif e.kind == "ramp":
                state = replace(state, distance=e.ramp_to, ramp=(e.at, e.distance, e.ramp_to, e.ramp_over))
            elif e.kind == "light":
                state = replace(state, light=e.light)
            else:
                continue
            if self.times and self.times[-1] == e.at:
                self.snapshots[-1] = state
            else:
                self.times.append(e.at)
                self.snapshots.append(state)

    def _snapshot(self, t: float) -> _Snapshot:
        idx = bisect.bisect_right(self.times, t) - 1
        return self._initial if idx < 0 else self.snapshots[idx]

    @staticmethod
    def _distance(snap: _Snapshot, t: float) -> float:
        if snap.ramp is None:
            return snap.distance
        start, d0, d1, over = snap.ramp
        if t >= start + over:
            return d1
        if t <= start:
            return d0
        return d0 + (d1 - d0) * (t - start) / over

    def fold(self, t: float) -> EnvState:
        snap = self._snapshot(t)
        prob = min(1.0, max(0.0, snap.prob * snap.light)) if snap.visible else 0.0
        return EnvState(
            visible_object=snap.visible,
            detect_prob=prob,
            true_distance=self._distance(snap, t),
            tap_pending=int(round(t * 1000)) in self._tap_set,
            score=snap.score if snap.visible else 0.0,
        )

    def distance_at_tick(self, tick: int) -> float:
        t = tick / 1000.0
        return self._distance(self._snapshot(t), t)

    def visibility_at_tick(self, tick: int) -> Visibility:
        snap = self._snapshot(tick / 1000.0)
        if not snap.visible:
            return NOTHING_VISIBLE
        return Visibility(snap.visible, snap.score, min(1.0, max(0.0, snap.prob * snap.light)))


def compile_timeline(s: Scenario) -> Timeline:
    return Timeline(s)


def env_at(s: Scenario, t: float, timeline: Timeline | None = None) -> EnvState:
    if not 0.0 <= t <= s.duration:
        raise PreconditionError(f"t={t} outside scenario [0, {s.duration}]")
    return (timeline or Timeline(s)).fold(t)
