"""Scaled-time evaluation planning: profile, solve, configure, map back.

Accelerated evaluation replays the energy trace at ``s_tp`` times real
speed. Keeping the energy balance of the real-time run requires scaling
input power by the same factor and raising the application's average power
consumption to match, which is done by raising its sampling frequency by a
factor ``s_f``. Because idle power shrinks as active tasks crowd the
schedule, ``s_f`` is not simply ``s_tp``; it solves

    s_f * Pa + (T - ta*s_f)/(T - ta) * Pi == s_tp * (Pa + Pi)

for measured averages ``Pa`` (active), ``Pi`` (idle), period ``T`` and
active time ``ta``. The scaled-time/unscaled-power scheme (``st_up``) keeps
power untouched and instead multiplies measured throughput by ``s_tp``.

The workflow: profile the app at a constant supply, compute ``s_f`` (or the
largest feasible ``s_tp``), build the scaled experiment, run it, then map
results back to the real-time axis and predict real-time throughput.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .app import AppSpec, ActivityProfile, apply_frequency_scaling
from .engine import (EnergyStackProfile, SimConfig, SimResult, simulate)
from .traces import (EventTrace, IrradianceTrace, TraceTransform,
                     apply_transform, transform_events)

__all__ = [
    "PowerProfile",
    "ScalingPlan",
    "PlanError",
    "MODES",
    "profile_application",
    "compute_sf",
    "scaled_average_power",
    "max_speedup",
    "build_experiment",
    "predict_throughput",
    "rescale_timeline",
]

MODES = ("realtime", "st_sp", "st_sp_sn", "st_up")


class PlanError(ValueError):
    """Infeasible or degenerate scaling request."""


@dataclass(frozen=True)
class PowerProfile:
    """Constant-supply application profile.

    ``p_active_avg`` is the energy of sampling+processing and communication
    tasks divided by total profiling time; ``p_idle_avg`` likewise for the
    sleep share. ``theta_profiling`` bytes were produced over
    ``t_profiling`` seconds.
    """

    p_active_avg: float
    p_idle_avg: float
    t_active: float
    t_app_period: float
    theta_profiling: int
    t_profiling: float

    def __post_init__(self):
        if self.p_active_avg <= 0:
            raise PlanError("profile has no periodic active tasks; "
                            "purely event-driven apps cannot be time-scaled")
        if self.p_idle_avg < 0:
            raise PlanError("p_idle_avg must be >= 0")
        if not self.t_active < self.t_app_period:
            raise PlanError("t_active must be below the application period")


@dataclass(frozen=True)
class ScalingPlan:
    """A validated evaluation-acceleration configuration.

    ``s_i`` scales trace amplitude to emulate panel sizing and applies in
    every mode; ``s_tp`` compresses time (and, except under ``st_up``,
    scales power with it); ``s_f`` is the sampling-frequency factor the
    application runs with under scaled power.
    """

    mode: str = "realtime"
    s_tp: float = 1.0
    s_f: float = 1.0
    s_i: float = 1.0
    binding: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise PlanError(f"unknown mode {self.mode!r}")
        if self.s_tp < 1.0:
            raise PlanError("s_tp must be >= 1")
        if self.s_i <= 0:
            raise PlanError("s_i must be > 0")
        if self.mode == "realtime" and (self.s_tp != 1.0 or self.s_f != 1.0):
            raise PlanError("realtime mode runs unscaled")
        if self.mode == "st_up" and self.s_f != 1.0:
            raise PlanError("st_up leaves the application unscaled (s_f == 1)")

    def as_dict(self) -> dict:
        return {"mode": self.mode, "s_tp": self.s_tp, "s_f": self.s_f,
                "s_i": self.s_i, "binding": self.binding}


def profile_application(app: AppSpec, duration: float = 3600.0, *,
                        supply_v: float = 3.3,
                        aggregation_step: float = 0.2) -> PowerProfile:
    """Profile the application at a constant supply voltage.

    Runs the engine with the supply chain bypassed and extracts the average
    active and idle power, the timing parameters, and the produced
    throughput. ``duration`` must cover at least one application period.
    """
    if duration < app.t_app_period:
        raise PlanError(
            f"profiling duration {duration:g} s is below one application "
            f"period ({app.t_app_period:g} s)")
    trace = IrradianceTrace(t=np.array([0.0, duration]), g=np.array([0.0, 0.0]),
                            source="profiling")
    cfg = SimConfig(supply_override=supply_v,
                    aggregation_step=aggregation_step,
                    dt_quiescent=aggregation_step,
                    end_policy="hard_stop")
    result = simulate(trace, None, None, app, cfg)
    sss = result.stack.ledger.sss_by_activity
    e_active = sss["sampling_processing"] + sss["communicating"]
    return PowerProfile(
        p_active_avg=e_active / duration,
        p_idle_avg=sss["idle"] / duration,
        t_active=app.t_active,
        t_app_period=app.t_app_period,
        theta_profiling=result.throughput_bytes,
        t_profiling=duration,
    )


def compute_sf(profile: PowerProfile, s_tp: float) -> float:
    """Sampling-frequency factor that scales average power by ``s_tp``.

    Round trip: plugging the result into :func:`scaled_average_power`
    recovers ``s_tp * (p_active_avg + p_idle_avg)``.
    """
    if s_tp < 1.0:
        raise PlanError("s_tp must be >= 1")
    pa, pi = profile.p_active_avg, profile.p_idle_avg
    T, ta = profile.t_app_period, profile.t_active
    den = (T - ta) * pa - ta * pi
    if den <= 0:
        raise PlanError("degenerate profile: idle power dominates the "
                        "schedule, no frequency scaling can reach the target")
    if s_tp == 1.0:
        return 1.0   # both sides of the power-matching equation coincide
    if pi == 0.0:
        return s_tp  # without idle power the factors collapse
    return (s_tp * (pa + pi) * (T - ta) - T * pi) / den


def scaled_average_power(profile: PowerProfile, s_f: float) -> float:
    """Average power of the application once sampling is scaled by ``s_f``."""
    pa, pi = profile.p_active_avg, profile.p_idle_avg
    T, ta = profile.t_app_period, profile.t_active
    return s_f * pa + (T - ta * s_f) / (T - ta) * pi


def max_speedup(profile: PowerProfile, spec: AppSpec,
                env_power_cap: float | None = None, *,
                peak_input: float | None = None,
                integer: bool = True) -> tuple[float, float, str]:
    """Largest feasible time-and-power factor and its frequency factor.

    The schedulability bound ``s_f <= T_S / (t_sample + t_comm)`` always
    applies; when ``env_power_cap`` is given (the highest input power the
    emulated environment can produce, in the same unit as ``peak_input``,
    the unscaled experiment's peak input), the scaled peak must stay under
    it. Returns (s_tp, s_f, binding constraint name); (1, 1) when no
    speed-up is admissible.
    """
    if env_power_cap is not None and peak_input is None:
        raise PlanError("env_power_cap needs peak_input to compare against")
    bound = spec.t_sample_period / spec.min_sample_period
    best = (1.0, 1.0)
    binding = "schedulability"
    s_tp = 1.0
    while s_tp < 1e6:
        try:
            s_f = compute_sf(profile, s_tp)
        except PlanError:
            binding = "degenerate_profile"
            break
        if s_f > bound * (1 + 1e-12):
            binding = "schedulability"
            break
        if (env_power_cap is not None
                and peak_input * s_tp > env_power_cap * (1 + 1e-12)):
            binding = "env_power_cap"
            break
        best = (s_tp, s_f)
        s_tp += 1.0 if integer else 0.25
    return best[0], best[1], binding


def build_experiment(plan: ScalingPlan, trace: IrradianceTrace,
                     events: EventTrace | None, app: AppSpec
                     ) -> tuple[IrradianceTrace, EventTrace | None, AppSpec]:
    """Configure the scaled experiment for a validated plan.

    Scaled-power modes compress the trace by ``s_tp``, raise its amplitude
    by ``s_i * s_tp`` and the sampling frequency by ``s_f``; ``st_up``
    compresses time at unscaled amplitude (``s_i`` only) and leaves the
    application untouched. Events are always co-scaled with the trace.
    """
    if plan.mode == "realtime":
        tf = TraceTransform(time_scale=1.0, amplitude_scale=plan.s_i)
        return apply_transform(trace, tf), events, app
    if plan.mode == "st_up":
        tf = TraceTransform(time_scale=plan.s_tp, amplitude_scale=plan.s_i)
        ev = transform_events(events, plan.s_tp) if events is not None else None
        return apply_transform(trace, tf), ev, app
    tf = TraceTransform(time_scale=plan.s_tp,
                        amplitude_scale=plan.s_i * plan.s_tp,
                        skip_nights=plan.mode == "st_sp_sn")
    ev = transform_events(events, plan.s_tp) if events is not None else None
    return apply_transform(trace, tf), ev, apply_frequency_scaling(app, plan.s_f)


def predict_throughput(plan: ScalingPlan, result: SimResult,
                       profile: PowerProfile | None = None) -> float:
    """Real-time throughput predicted from a (scaled) run.

    Under scaled power the application was modified, so bytes measured in
    the experiment do not directly estimate the original application's
    output; instead the powered time ``t_exp`` of the scaled run is mapped
    back through the profiling rate:
    ``theta = s_tp * t_exp / t_profiling * theta_profiling``. Under
    ``st_up`` the measured bytes are simply multiplied by ``s_tp``.
    """
    if plan.mode == "realtime":
        return float(result.throughput_bytes)
    if plan.mode == "st_up":
        return plan.s_tp * result.throughput_bytes
    if profile is None:
        raise PlanError("scaled-power prediction needs the power profile")
    if profile.t_profiling <= 0:
        raise PlanError("profile has zero duration")
    return (plan.s_tp * result.on_time_s / profile.t_profiling
            * profile.theta_profiling)


def _rebin_mean(values: np.ndarray, s_tp: float, n_out: int) -> np.ndarray:
    """Overlap-weighted mean of per-bin values onto an axis stretched by s_tp."""
    n_in = len(values)
    cum = np.concatenate([[0.0], np.cumsum(values)])
    # output bin j covers [j, j+1) / s_tp on the input-bin axis
    edges = np.arange(n_out + 1) / s_tp
    edges = np.clip(edges, 0.0, n_in)
    cum_at = np.interp(edges, np.arange(n_in + 1), cum)
    widths = np.diff(edges)
    out = np.zeros(n_out)
    nz = widths > 0
    out[nz] = np.diff(cum_at)[nz] / widths[nz]
    return out


def _rebin_sum(values: np.ndarray, s_tp: float, n_out: int) -> np.ndarray:
    """Conservative redistribution of per-bin totals onto the stretched axis."""
    n_in = len(values)
    cum = np.concatenate([[0.0], np.cumsum(values)])
    edges = np.arange(n_out + 1) / s_tp
    edges = np.clip(edges, 0.0, n_in)
    cum_at = np.interp(edges, np.arange(n_in + 1), cum)
    return np.diff(cum_at)


def rescale_timeline(result: SimResult, s_tp: float) -> SimResult:
    """Map a scaled run back to the real-time axis.

    Every time step is stretched by ``s_tp``; activity and stack profiles
    are re-binned onto the standard grid on the real-time axis (energies
    redistributed conservatively, on/off by majority overlap) and the
    voltage series is re-timed.
    """
    if s_tp < 1.0:
        raise PlanError("s_tp must be >= 1")
    if s_tp == 1.0:
        return result
    act = result.activity
    prof = result.profile
    n_out = int(round(len(act) * s_tp))
    on_frac = _rebin_mean(act.on_off.astype(float), s_tp, n_out)
    centers = (np.arange(n_out) + 0.5) / s_tp
    src = np.minimum(centers.astype(int), len(act) - 1)
    activity = ActivityProfile(step_len=act.step_len,
                               on_off=on_frac >= 0.5,
                               labels=act.labels[src])
    profile = EnergyStackProfile(
        step_len=prof.step_len,
        t_start=np.arange(n_out) * prof.step_len,
        harvest=_rebin_sum(prof.harvest, s_tp, n_out),
        mppt_loss=_rebin_sum(prof.mppt_loss, s_tp, n_out),
        converter_loss=_rebin_sum(prof.converter_loss, s_tp, n_out),
        soc_energy=_rebin_sum(prof.soc_energy, s_tp, n_out),
        sensor_energy=_rebin_sum(prof.sensor_energy, s_tp, n_out),
        storage_delta=_rebin_sum(prof.storage_delta, s_tp, n_out),
    )
    return replace(
        result,
        activity=activity,
        profile=profile,
        duration_s=result.duration_s * s_tp,
        on_time_s=result.on_time_s * s_tp,
        voltage_t=result.voltage_t * s_tp,
        event_log=(result.event_log * np.array([s_tp, 1.0])
                   if len(result.event_log) else result.event_log),
    )
