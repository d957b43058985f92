from __future__ import annotations

import asyncio
import logging
import os
from typing import Any, Dict, List, Literal, Optional

from dotenv import load_dotenv
from fastapi import Depends, FastAPI, Header, HTTPException, Query
from pydantic import BaseModel, ConfigDict, Field

from .driver_model import GateDrive, LoadParams, MosfetParams, peak_dissipation, steady_current, transient_simulate
from .errors import PreconditionError, ScenarioParseError
from .peripherals import BatteryState, SLOPE_V_PER_MAH, V_FULL, battery_step
from .scenario import parse_scenario
from .settings import load_config
from .simulation import Simulation
from .trace import RunSummary

load_dotenv()

app = FastAPI(title="exosim")
logger = logging.getLogger(__name__)


def require_bearer(authorization: str | None = Header(default=None)) -> None:
    expected = os.getenv("EXOSIM_API_TOKEN", "").strip()
    if not expected:
        return
    if not authorization or not authorization.startswith("Bearer "):
        raise HTTPException(status_code=401, detail="Missing bearer token")
    token = authorization.removeprefix("Bearer ").strip()
    if token != expected:
        raise HTTPException(status_code=403, detail="Invalid bearer token")


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: str
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    fps: Optional[float] = Field(default=None, gt=0)
    latency_ms: Optional[float] = Field(default=None, ge=0)
    trace_mode: Optional[Literal["full", "events"]] = None
    watchdog_mode: Optional[Literal["halt", "reset"]] = None


class TraceEvent(BaseModel):
    tick: int
    event: str
    detail: str = ""
    motor_state: str
    hand_state: str


class SimulateResponse(BaseModel):
    exit_code: int
    summary: RunSummary
    events: List[TraceEvent]
    log: List[str]


class CheckRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: str


def _parse_or_422(text: str):
    try:
        return parse_scenario(text)
    except ScenarioParseError as exc:
        raise HTTPException(status_code=422, detail=[d.to_dict() for d in exc.diagnostics])


def _simulate(req: SimulateRequest) -> SimulateResponse:
    scenario = _parse_or_422(req.scenario)
    config = load_config(
        seed=req.seed,
        fps=req.fps,
        latency_ms=req.latency_ms,
        trace_mode=req.trace_mode,
        watchdog_mode=req.watchdog_mode,
    )
    sim = Simulation(scenario, config)
    summary = sim.run()
    events = [
        TraceEvent(tick=r.tick, event=r.event, detail=r.detail, motor_state=r.motor_state, hand_state=r.hand_state)
        for r in sim.records
        if r.event
    ]
    return SimulateResponse(exit_code=summary.exit_code, summary=summary, events=events, log=sim.log.lines)


@app.get("/healthz")
async def healthz():
    return {"ok": True}


@app.post("/simulate", dependencies=[Depends(require_bearer)])
async def simulate(req: SimulateRequest) -> SimulateResponse:
    result = await asyncio.to_thread(_simulate, req)
    logger.info(
        "api_simulate exit_code=%s grasp_cycles=%s events=%s",
        result.exit_code,
        result.summary.grasp_cycles,
        len(result.events),
    )
    return result


@app.post("/check", dependencies=[Depends(require_bearer)])
async def check(req: CheckRequest) -> Dict[str, Any]:
    scenario = _parse_or_422(req.scenario)
    return {"ok": True, "events": len(scenario.events), "duration_s": scenario.duration}


@app.get("/driver", dependencies=[Depends(require_bearer)])
async def driver(
    load: Literal["motor", "solenoid"] = Query(default="motor"),
    soft_start: bool = Query(default=True),
    dt: Optional[float] = Query(default=None, gt=0),
    vth: Optional[float] = Query(default=None),
    motor_load: Literal["open", "close"] = Query(default="close"),
) -> Dict[str, Any]:
    try:
        params = LoadParams.motor(motor_load) if load == "motor" else LoadParams.solenoid()
        mosfet = MosfetParams() if vth is None else MosfetParams.fitted(vth)
        drive = GateDrive(soft_start=soft_start)
        t_end = 5.0 * drive.rc if soft_start else 0.05
        step = dt if dt is not None else params.tau / 20.0
        series = await asyncio.to_thread(transient_simulate, params, mosfet, drive, t_end, step)
    except PreconditionError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    peak = peak_dissipation(series)
    return {
        "peak_w": peak,
        "steady_ma": 1000.0 * steady_current(series),
        "within_rating": peak < mosfet.p_max,
    }


@app.get("/battery", dependencies=[Depends(require_bearer)])
async def battery(
    current_ma: float = Query(ge=0),
    hours: float = Query(ge=0),
    v0: float = Query(default=V_FULL, gt=9.0, le=V_FULL),
    slope: float = Query(default=SLOPE_V_PER_MAH, gt=0),
) -> Dict[str, Any]:
    end = battery_step(BatteryState.from_voltage(v0, slope_k=slope), current_ma, hours * 3600.0)
    return {"voltage": end.voltage, "consumed_mah": end.consumed}
