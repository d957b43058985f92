from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import IO, List, Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from .driver_model import GateDrive, LoadParams, MosfetParams, peak_dissipation, steady_current, transient_simulate
from .errors import ExosimError, PreconditionError, ScenarioDiagnostic, ScenarioParseError
from .logging_utils import configure_logging
from .peripherals import BatteryState, SLOPE_V_PER_MAH, V_FULL, battery_step
from .scenario import Scenario, parse_scenario
from .settings import load_config
from .simulation import EXIT_PARSE, Simulation
from .trace import summary_json, summary_text, write_trace_csv

logger = logging.getLogger(__name__)


def _on_off(value: str) -> bool:
    raw = value.strip().lower()
    if raw in {"on", "1", "true", "yes"}:
        return True
    if raw in {"off", "0", "false", "no"}:
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exosim", description="Hand-exoskeleton firmware simulator")
    parser.add_argument("--log-level", default=None, help="Python logging level (default: EXOSIM_LOG_LEVEL or WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario through kernel, firmware and plant")
    run.add_argument("scenario", type=Path)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", type=Path, default=None, help="trace CSV path")
    run.add_argument("--summary", choices=("json", "text"), default="text")
    run.add_argument("--summary-out", type=Path, default=None, help="write the JSON summary here too")
    run.add_argument("--trace", choices=("full", "events"), default=None)
    run.add_argument("--fps", type=float, default=None)
    run.add_argument("--latency-ms", type=float, default=None)
    run.add_argument("--watchdog-mode", choices=("halt", "reset"), default=None)

    drv = sub.add_parser("driver", help="MOSFET driver turn-on transient")
    drv.add_argument("--load", choices=("motor", "solenoid"), required=True)
    drv.add_argument("--soft-start", type=_on_off, required=True)
    drv.add_argument("--dt", type=float, default=5e-6)
    drv.add_argument("--t-end", type=float, default=None)
    drv.add_argument("--vth", type=float, default=None, help="threshold voltage; gain refitted to 53 mOhm")
    drv.add_argument("--motor-load", choices=("open", "close"), default="close")
    drv.add_argument("--out", type=Path, default=None, help="CSV path (t,v_gs,v_ds,i_d,p_fet)")

    bat = sub.add_parser("battery", help="constant-current discharge")
    bat.add_argument("--current-ma", type=float, required=True)
    bat.add_argument("--hours", type=float, required=True)
    bat.add_argument("--v0", type=float, default=V_FULL)
    bat.add_argument("--slope", type=float, default=SLOPE_V_PER_MAH)

    chk = sub.add_parser("check", help="parse a scenario and report diagnostics")
    chk.add_argument("scenario", type=Path)

    srv = sub.add_parser("serve", help="start the HTTP API")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    return parser


def _decode_diagnostic(exc: UnicodeDecodeError) -> ScenarioDiagnostic:
    raw = exc.object
    line_start = raw.rfind(b"\n", 0, exc.start) + 1
    return ScenarioDiagnostic(
        line=raw.count(b"\n", 0, exc.start) + 1,
        column=exc.start - line_start + 1,
        message=f"invalid UTF-8 byte 0x{raw[exc.start]:02x}",
    )


def _load_scenario(path: Path, err: IO[str]) -> Optional[Scenario]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"{path}: cannot read scenario: {exc.strerror or exc}", file=err)
        return None
    except UnicodeDecodeError as exc:
        print(f"{path}: {_decode_diagnostic(exc)}", file=err)
        return None
    try:
        return parse_scenario(text)
    except ScenarioParseError as exc:
        for diag in exc.diagnostics:
            print(f"{path}: {diag}", file=err)
        return None


def _cmd_run(args: argparse.Namespace, out: IO[str], err: IO[str]) -> int:
    scenario = _load_scenario(args.scenario, err)
    if scenario is None:
        return EXIT_PARSE
    config = load_config(
        seed=args.seed,
        trace_mode=args.trace,
        fps=args.fps,
        latency_ms=args.latency_ms,
        watchdog_mode=args.watchdog_mode,
    )
    sim = Simulation(scenario, config)
    summary = sim.run()
    if args.out is not None:
        with args.out.open("w", encoding="utf-8", newline="") as fp:
            rows = write_trace_csv(sim.records, fp)
        logger.info("trace_written path=%s rows=%s", args.out, rows)
    if args.summary_out is not None:
        args.summary_out.write_text(summary_json(summary), encoding="utf-8")
    out.write(summary_json(summary) if args.summary == "json" else summary_text(summary))
    return summary.exit_code


def _cmd_driver(args: argparse.Namespace, out: IO[str], err: IO[str]) -> int:
    load = LoadParams.motor(args.motor_load) if args.load == "motor" else LoadParams.solenoid()
    mosfet = MosfetParams() if args.vth is None else MosfetParams.fitted(args.vth)
    drive = GateDrive(soft_start=args.soft_start)
    t_end = args.t_end
    if t_end is None:
        t_end = 5.0 * drive.rc if drive.soft_start else 0.05
    series = transient_simulate(load, mosfet, drive, t_end, args.dt)
    if args.out is not None:
        with args.out.open("w", encoding="utf-8", newline="") as fp:
            series.write_csv(fp)
    peak = peak_dissipation(series)
    out.write(
        f"peak_W={peak:.4f} steady_mA={1000.0 * steady_current(series):.2f} "
        f"within_rating={int(peak < mosfet.p_max)}\n"
    )
    return 0


def _cmd_battery(args: argparse.Namespace, out: IO[str], err: IO[str]) -> int:
    if args.current_ma < 0 or args.hours < 0:
        print("current and hours must be non-negative", file=err)
        return 2
    if not 9.0 < args.v0 <= V_FULL:
        print(f"v0 must be in (9.0, {V_FULL}], got {args.v0}", file=err)
        return 2
    start = BatteryState.from_voltage(args.v0, slope_k=args.slope)
    end = battery_step(start, args.current_ma, args.hours * 3600.0)
    out.write(f"{end.voltage:.2f}\n")
    return 0


def _cmd_check(args: argparse.Namespace, out: IO[str], err: IO[str]) -> int:
    scenario = _load_scenario(args.scenario, err)
    if scenario is None:
        return EXIT_PARSE
    out.write(f"ok events={len(scenario.events)} duration_s={scenario.duration!r}\n")
    return 0


def _cmd_serve(args: argparse.Namespace, out: IO[str], err: IO[str]) -> int:
    import uvicorn

    uvicorn.run("exosim.api:app", host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "driver": _cmd_driver,
    "battery": _cmd_battery,
    "check": _cmd_check,
    "serve": _cmd_serve,
}


def cli_main(argv: Sequence[str] | None = None, *, out: IO[str] | None = None, err: IO[str] | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    configure_logging(args.log_level)
    try:
        return _COMMANDS[args.command](args, out, err)
    except (PreconditionError, ValidationError) as exc:
        print(f"error: {exc}", file=err)
        return 2
    except ExosimError as exc:
        logger.exception("cli_failed command=%s", args.command)
        print(f"error: {exc}", file=err)
        return 1


def main(argv: List[str] | None = None) -> None:
    sys.exit(cli_main(argv))
