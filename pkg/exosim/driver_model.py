from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterator, Literal, Optional, Sequence, Union

import numpy as np

from .errors import ConvergenceError, PreconditionError

logger = logging.getLogger(__name__)

DIODE_DROP = 0.7
OPEN_SWITCH_RESISTANCE = 1.0e6
CSV_COLUMNS = ("t", "v_gs", "v_ds", "i_d", "p_fet")

MotorLoad = Literal["open", "close"]


@dataclass(frozen=True)
class MosfetParams:
    v_th: float = 0.8
    k_gain: float = 9.43
    rds_on_ref: float = 0.053
    p_max: float = 1.3
    v_gs_ref: float = 1.8

    def __post_init__(self) -> None:
        if not 0.5 <= self.v_th <= 1.1:
            raise PreconditionError(f"v_th {self.v_th} outside the 0.5..1.1 V datasheet band")
        if self.k_gain <= 0:
            raise PreconditionError("k_gain must be positive")

    @classmethod
    def fitted(cls, v_th: float = 0.8, *, rds_on_ref: float = 0.053, v_gs_ref: float = 1.8) -> "MosfetParams":
        """Square-law gain whose small-signal triode resistance at `v_gs_ref` equals `rds_on_ref`."""
        k = 1.0 / (2.0 * rds_on_ref * (v_gs_ref - v_th))
        return cls(v_th=v_th, k_gain=k, rds_on_ref=rds_on_ref, v_gs_ref=v_gs_ref)

    def triode_resistance(self, v_gs: float) -> float:
        return 1.0 / (2.0 * self.k_gain * (v_gs - self.v_th))


@dataclass(frozen=True)
class LoadParams:
    kind: Literal["motor", "solenoid"]
    resistance: float
    inductance: float
    supply: float
    back_emf_coeff: float = 0.0
    friction: float = 0.0
    inertia: float = 0.0
    steady_current_target: Optional[float] = None  # mA

    def __post_init__(self) -> None:
        if self.resistance <= 0 or self.inductance <= 0:
            raise PreconditionError("resistance and inductance must be positive")
        if self.kind == "motor" and (self.back_emf_coeff <= 0 or self.inertia <= 0):
            raise PreconditionError("motor load needs back_emf_coeff and inertia")

    @property
    def tau(self) -> float:
        return self.inductance / self.resistance

    @classmethod
    def solenoid(cls, *, resistance: float = 23.1, inductance: float = 6.73e-3, supply: float = 3.3) -> "LoadParams":
        return cls(kind="solenoid", resistance=resistance, inductance=inductance, supply=supply)

    @classmethod
    def motor(
        cls,
        load: MotorLoad = "close",
        *,
        resistance: float = 3.99,
        inductance: float = 2.0e-3,
        supply: float = 5.0,
        back_emf_coeff: float = 0.01,
        tau_mech: float = 0.01,
        rds_on: float = 0.053,
    ) -> "LoadParams":
        """Pump motor calibrated to draw 250 mA (opening) or 395 mA (closing) at steady state."""
        target_ma = {"open": 250.0, "close": 395.0}[load]
        i_ss = target_ma / 1000.0
        omega_ss = (supply - (resistance + rds_on) * i_ss) / back_emf_coeff
        if omega_ss <= 0:
            raise PreconditionError("steady current target leaves no voltage for back-EMF")
        friction = back_emf_coeff * i_ss / omega_ss
        inertia = tau_mech * (friction + back_emf_coeff**2 / resistance)
        return cls(
            kind="motor",
            resistance=resistance,
            inductance=inductance,
            supply=supply,
            back_emf_coeff=back_emf_coeff,
            friction=friction,
            inertia=inertia,
            steady_current_target=target_ma,
        )


@dataclass(frozen=True)
class GateDrive:
    v_logic: float = 1.8
    soft_start: bool = True
    r_gate: float = 100e3
    c_gate: float = 1e-6

    @property
    def rc(self) -> float:
        return self.r_gate * self.c_gate


@dataclass(frozen=True)
class TransientSample:
    t: float
    v_gs: float
    v_ds: float
    i_d: float
    p_fet: float
    i_load: float = 0.0


@dataclass
class TransientSeries:
    """Uniformly spaced samples; `i_d` is channel current, `i_load` the inductor current."""

    t: np.ndarray
    v_gs: np.ndarray
    v_ds: np.ndarray
    i_d: np.ndarray
    p_fet: np.ndarray
    i_load: np.ndarray
    emf: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # max dissipation over every integration substep, not only the stored samples
    peak_w: Optional[float] = None

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __getitem__(self, n: int) -> TransientSample:
        return TransientSample(
            float(self.t[n]),
            float(self.v_gs[n]),
            float(self.v_ds[n]),
            float(self.i_d[n]),
            float(self.p_fet[n]),
            float(self.i_load[n]),
        )

    def __iter__(self) -> Iterator[TransientSample]:
        for n in range(len(self)):
            yield self[n]

    def write_csv(self, fp: IO[str]) -> None:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in zip(self.t, self.v_gs, self.v_ds, self.i_d, self.p_fet):
            writer.writerow([repr(float(x)) for x in row])


def gate_voltage(t: float, drive: GateDrive) -> float:
    if t < 0:
        raise PreconditionError(f"t must be >= 0, got {t}")
    if drive.soft_start:
        return -drive.v_logic * math.expm1(-t / drive.rc)
    return drive.v_logic if t > 0 else 0.0


def mosfet_current(v_gs: float, v_ds: float, m: MosfetParams) -> float:
    if v_ds < 0:
        raise PreconditionError(f"v_ds must be >= 0 for a low-side switch, got {v_ds}")
    vov = v_gs - m.v_th
    if vov <= 0:
        return 0.0
    if v_ds > vov:
        return m.k_gain * vov * vov
    return m.k_gain * (2.0 * vov * v_ds - v_ds * v_ds)


def _solve_triode_vds(target: float, vov: float, k: float, step: int, max_iter: int) -> float:
    """Drain voltage in [0, vov] at which the triode law carries `target` amps."""
    if target <= 0.0:
        return 0.0
    i_sat = k * vov * vov
    if target >= i_sat:
        return vov
    lo, hi = 0.0, vov
    v = target / (2.0 * k * vov)
    if not lo < v < hi:
        v = 0.5 * (lo + hi)
    tol = 1e-15 + 1e-12 * target
    for _ in range(max_iter):
        g = k * (2.0 * vov * v - v * v) - target
        if abs(g) <= tol:
            return v
        if g > 0:
            hi = v
        else:
            lo = v
        slope = 2.0 * k * (vov - v)
        nxt = v - g / slope if slope > 0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        v = nxt
    raise ConvergenceError(step)


def transient_simulate(
    load: LoadParams,
    m: MosfetParams,
    drive: GateDrive,
    t_end: float,
    dt: float = 5e-6,
    *,
    max_iter: int = 100,
) -> TransientSeries:
    """Fixed-step RK4 turn-on transient of a low-side MOSFET driving `load`.

    Sample 0 is the instant just after the gate switches: the drain node has
    not moved yet (v_ds = supply - back-EMF) while the channel already
    conducts whatever the gate allows.

    Samples are stored every `dt`; the integrator itself steps in equal
    substeps no longer than L/R/100.
    """
    if dt <= 0 or t_end <= 0:
        raise PreconditionError("dt and t_end must be positive")
    if dt > load.tau / 20.0 * (1 + 1e-9):
        raise PreconditionError(f"dt={dt} exceeds L/R/20={load.tau / 20.0}")
    if drive.soft_start and t_end < 5.0 * drive.rc * (1 - 1e-12):
        raise PreconditionError(f"t_end={t_end} shorter than five gate time constants")

    V = load.supply
    R = load.resistance
    L = load.inductance
    ke = load.back_emf_coeff
    b = load.friction
    J = load.inertia
    is_motor = load.kind == "motor"
    k = m.k_gain
    vth = m.v_th
    v_logic = drive.v_logic
    rc = drive.rc
    soft = drive.soft_start

    def gate(t: float) -> tuple[float, float]:
        if soft:
            decay = math.exp(-t / rc)
            return v_logic * (1.0 - decay), v_logic * decay / rc
        return v_logic, 0.0

    def drain(t: float, i: float, w: float, step: int) -> tuple[float, float, bool]:
        vgs, dvgs = gate(t)
        vov = vgs - vth
        e = ke * w
        if vov > 0:
            i_sat = k * vov * vov
            di_sat = 2.0 * k * vov * dvgs
        else:
            i_sat = 0.0
            di_sat = 0.0
        if i >= i_sat:
            v_lim = min(V - e - R * i_sat - L * di_sat, V + DIODE_DROP)
            if vov <= 0 or v_lim > vov:
                return max(v_lim, 0.0), i_sat, True
            return vov, i_sat, False
        return _solve_triode_vds(i, vov, k, step, max_iter), i, False

    def derivs(t: float, i: float, w: float, step: int) -> tuple[float, float]:
        v_ds, _, _ = drain(t, i, w, step)
        e = ke * w
        di = (V - e - R * i - v_ds) / L
        dw = (ke * i - b * w) / J if is_motor else 0.0
        return di, dw

    n_steps = int(round(t_end / dt))
    size = n_steps + 1
    t_arr = np.arange(size, dtype=float) * dt
    vgs_arr = np.empty(size)
    vds_arr = np.empty(size)
    id_arr = np.empty(size)
    p_arr = np.empty(size)
    il_arr = np.empty(size)
    emf_arr = np.empty(size)

    vgs0 = gate(0.0)[0]
    vds0 = V
    id0 = mosfet_current(vgs0, vds0, m)
    vgs_arr[0], vds_arr[0], id_arr[0], p_arr[0], il_arr[0], emf_arr[0] = vgs0, vds0, id0, vds0 * id0, 0.0, 0.0

    substeps = max(1, math.ceil(dt / (load.tau / 100.0) - 1e-9))
    h = dt / substeps
    peak = float(p_arr[0])
    i = 0.0
    w = 0.0
    for n in range(n_steps):
        for s in range(substeps):
            t = (n * substeps + s) * h
            k1i, k1w = derivs(t, i, w, n)
            k2i, k2w = derivs(t + 0.5 * h, i + 0.5 * h * k1i, w + 0.5 * h * k1w, n)
            k3i, k3w = derivs(t + 0.5 * h, i + 0.5 * h * k2i, w + 0.5 * h * k2w, n)
            k4i, k4w = derivs(t + h, i + h * k3i, w + h * k3w, n)
            i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
            w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
            i = max(i, 0.0)

            t_next = t + h
            v_ds, i_ch, limited = drain(t_next, i, w, n)
            if limited:
                i = i_ch
            peak = max(peak, v_ds * i_ch)

        j = n + 1
        vgs_arr[j] = gate(t_next)[0]
        vds_arr[j] = v_ds
        id_arr[j] = i_ch
        p_arr[j] = v_ds * i_ch
        il_arr[j] = i
        emf_arr[j] = ke * w

    series = TransientSeries(t_arr, vgs_arr, vds_arr, id_arr, p_arr, il_arr, emf_arr, peak_w=peak)
    logger.debug(
        "driver_transient load=%s soft=%s steps=%s substeps=%s peak_w=%.4f",
        load.kind,
        soft,
        n_steps,
        substeps,
        peak,
    )
    return series


def turnoff_transient(
    load: LoadParams,
    initial_current: float,
    flyback: bool = True,
    *,
    t_end: Optional[float] = None,
    dt: Optional[float] = None,
) -> TransientSeries:
    """Closed-form switch-off of an RL load, with or without the flyback diode.

    Back-EMF is held out of the decay; the gate is low throughout.
    """
    if initial_current < 0:
        raise PreconditionError("initial current must be >= 0")
    V = load.supply
    R = load.resistance
    L = load.inductance
    if flyback:
        tau = L / R
    else:
        tau = L / (R + OPEN_SWITCH_RESISTANCE)
    t_end = 10.0 * tau if t_end is None else t_end
    dt = tau / 200.0 if dt is None else dt
    t = np.arange(int(round(t_end / dt)) + 1, dtype=float) * dt
    zeros = np.zeros_like(t)

    if initial_current == 0:
        return TransientSeries(t, zeros, np.full_like(t, V), zeros, zeros.copy(), zeros.copy(), zeros.copy())

    if flyback:
        floor = DIODE_DROP / R
        i_load = np.maximum((initial_current + floor) * np.exp(-t / tau) - floor, 0.0)
        v_ds = np.where(i_load > 0, V + DIODE_DROP, V)
        return TransientSeries(t, zeros, v_ds, zeros.copy(), zeros.copy(), i_load, zeros.copy())

    # open switch as a large resistor: decays to the off-state leakage V/(R+R_off)
    leak = V / (R + OPEN_SWITCH_RESISTANCE)
    i_load = leak + (initial_current - leak) * np.exp(-t / tau)
    v_ds = i_load * OPEN_SWITCH_RESISTANCE
    return TransientSeries(t, zeros, v_ds, i_load, v_ds * i_load, i_load, zeros.copy())


SeriesLike = Union[TransientSeries, Sequence[TransientSample]]


def peak_dissipation(series: SeriesLike) -> float:
    if len(series) == 0:
        raise PreconditionError("peak_dissipation needs a non-empty series")
    if isinstance(series, TransientSeries):
        sampled = float(np.max(series.p_fet))
        return sampled if series.peak_w is None else max(sampled, series.peak_w)
    return max(float(s.p_fet) for s in series)


def steady_current(series: TransientSeries) -> float:
    return float(series.i_load[-1])


@dataclass(frozen=True)
class EnergyBalance:
    supply: float
    load: float
    mosfet: float
    mechanical: float
    stored: float

    @property
    def residual(self) -> float:
        return self.supply - (self.load + self.mosfet + self.mechanical + self.stored)


# numpy 2 renamed trapz
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _integrate(y: np.ndarray, t: np.ndarray) -> float:
    return float(_trapezoid(y, t))


def energy_balance(series: TransientSeries, load: LoadParams) -> EnergyBalance:
    i = series.i_load
    t = series.t
    emf = series.emf if series.emf.shape == i.shape else np.zeros_like(i)
    return EnergyBalance(
        supply=_integrate(load.supply * i, t),
        load=_integrate(load.resistance * i * i, t),
        mosfet=_integrate(series.v_ds * i, t),
        mechanical=_integrate(emf * i, t),
        stored=0.5 * load.inductance * float(i[-1]) ** 2 - 0.5 * load.inductance * float(i[0]) ** 2,
    )
