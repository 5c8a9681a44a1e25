"""Harness configuration: JSON config files, model builders, result files.

A config file describes one experiment: trace sources, the electrical
chain, the application (by preset name or full parameter block), simulation
settings, an optional scaling plan, and an optional sweep grid. Configs
hash canonically so every output can state exactly what produced it, and
they round-trip through serialization losslessly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .app import AppSpec, PRESETS, preset, preset_irradiance_scale
from .engine import (EnergyLedger, EnergyStack, EnergyStackProfile, SimConfig,
                     SimResult, ConfigError, LEDGER_ACTIVITIES)
from .app import ActivityProfile, PHASES
from .ess import (ConverterModel, EfficiencyCurve, EssConfig, HarvesterModel,
                  MpptModel, StorageModel)
from .traces import (EventTrace, IrradianceTrace, generate_parking_events,
                     parse_events, parse_irradiance)

__all__ = [
    "HarnessConfig",
    "config_hash",
    "load_config",
    "build_ess",
    "build_app",
    "build_sim",
    "load_trace",
    "load_events",
    "save_result",
    "load_result",
]


def config_hash(raw: dict) -> str:
    """Canonical sha256 (first 16 hex digits) of a config dict."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class HarnessConfig:
    """A loaded config file plus its provenance."""

    raw: dict
    base_dir: str = "."

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def path(self, rel: str) -> str:
        return rel if os.path.isabs(rel) else os.path.join(self.base_dir, rel)


def load_config(path: str) -> HarnessConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return HarnessConfig(raw=raw, base_dir=os.path.dirname(os.path.abspath(path)))


def _efficiency(value) -> EfficiencyCurve:
    if value is None:
        return EfficiencyCurve.flat(0.85)
    if isinstance(value, (int, float)):
        return EfficiencyCurve.flat(float(value))
    pts = sorted((float(p), float(e)) for p, e in value)
    return EfficiencyCurve(power_w=tuple(p for p, _ in pts),
                           eta=tuple(e for _, e in pts))


def _load_iv_surface(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three-column (irradiance, voltage, current) grid file."""
    rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if rows.shape[1] != 3:
        raise ConfigError("iv surface file needs 3 columns (g, v, i)")
    gs = np.unique(rows[:, 0])
    vs = np.unique(rows[:, 1])
    grid = np.full((len(gs), len(vs)), np.nan)
    for g, v, i in rows:
        grid[np.searchsorted(gs, g), np.searchsorted(vs, v)] = i
    if np.isnan(grid).any():
        raise ConfigError("iv surface file does not cover the full grid")
    return gs, vs, grid


def build_ess(cfg: HarnessConfig, overrides: dict | None = None) -> EssConfig:
    block = dict(cfg.raw.get("ess", {}))
    if overrides:
        for key, sub in overrides.items():
            merged = dict(block.get(key, {}))
            merged.update(sub)
            block[key] = merged
    h = dict(block.get("harvester", {}))
    kind = h.pop("kind", "linear_mpp")
    if kind == "iv_surface":
        gs, vs, grid = _load_iv_surface(cfg.path(h.pop("path")))
        harvester = HarvesterModel(model_kind="iv_surface", iv_irradiance=gs,
                                   iv_voltage=vs, iv_current=grid)
    else:
        harvester = HarvesterModel(model_kind="linear_mpp",
                                   k_mpp=float(h.pop("k_mpp", 1e-4)))
    m = dict(block.get("mppt", {}))
    if "converter_efficiency" in m:
        m["converter_efficiency"] = _efficiency(m["converter_efficiency"])
    mppt = MpptModel(**m)
    s = dict(block.get("storage", {}))
    if "leak_resistance" in s and s["leak_resistance"] in ("inf", None):
        s["leak_resistance"] = math.inf
    storage = StorageModel(**s)
    c = dict(block.get("converter", {}))
    if "efficiency" in c:
        c["efficiency"] = _efficiency(c["efficiency"])
    converter = ConverterModel(**c)
    return EssConfig(harvester=harvester, mppt=mppt, storage=storage,
                     converter=converter)


def build_app(cfg: HarnessConfig) -> tuple[AppSpec, float]:
    """App spec plus its default irradiance scaler (preset-aware)."""
    block = dict(cfg.raw.get("app", {}))
    s_i = 1.0
    if "preset" in block:
        name = block.pop("preset")
        spec = preset(name)
        s_i = preset_irradiance_scale(name)
        if block:  # field overrides on top of a preset
            spec = AppSpec(**{**_spec_fields(spec), **block})
    else:
        spec = AppSpec(**block)
    plan_block = cfg.raw.get("plan", {})
    s_i = float(plan_block.get("s_i", s_i))
    return spec, s_i


def _spec_fields(spec: AppSpec) -> dict:
    return asdict(spec)


def build_sim(cfg: HarnessConfig, overrides: dict | None = None) -> SimConfig:
    block = dict(cfg.raw.get("sim", {}))
    if overrides:
        block.update(overrides)
    return SimConfig(**block)


def load_trace(cfg: HarnessConfig) -> IrradianceTrace:
    block = cfg.raw.get("trace")
    if not block or "path" not in block:
        raise ConfigError("config needs a trace block with a path")
    path = cfg.path(block["path"])
    with open(path, "r", encoding="utf-8") as fh:
        return parse_irradiance(fh, time_unit=block.get("time_unit", "s"),
                                label=os.path.basename(path))


def load_events(cfg: HarnessConfig, seed_override: int | None = None
                ) -> EventTrace | None:
    block = cfg.raw.get("events")
    if not block:
        return None
    if "path" in block:
        with open(cfg.path(block["path"]), "r", encoding="utf-8") as fh:
            return parse_events(fh, time_unit=block.get("time_unit", "s"))
    if "parking" in block:
        p = block["parking"]
        seed = seed_override if seed_override is not None else int(p.get("seed", 0))
        return generate_parking_events(
            opening=tuple(p.get("opening", (9.0, 20.0))),
            peak_h=float(p.get("peak_h", 14.0)),
            n_events_per_day=int(p.get("n_events_per_day", 200)),
            days=int(p.get("days", 5)),
            seed=seed)
    raise ConfigError("events block needs a path or a parking generator")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def save_result(result: SimResult, out_dir: str) -> None:
    """Write the result files: JSON scalars/stack plus CSV companions.

    ``result.json`` is byte-stable for identical runs; wall-clock metadata
    goes to ``run_meta.json`` so hashes and diffs stay meaningful.
    """
    os.makedirs(out_dir, exist_ok=True)
    led = result.stack.ledger
    payload = {
        "config_hash": result.stack.config_hash,
        "run_id": result.stack.run_id,
        "duration_s": result.duration_s,
        "throughput_bytes": result.throughput_bytes,
        "on_time_s": result.on_time_s,
        "boots": result.boots,
        "events": {
            "offered": result.events_offered,
            "detected": result.events_detected,
            "detected_at_event": result.events_detected_at_event,
            "detected_at_next_sample": result.events_observed,
        },
        "final": {"v_cap": result.v_cap_final,
                  "converter_on": result.converter_on_final},
        "stack": result.stack.as_dict(),
    }
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8") as fh:
        json.dump({"wall_time_s": result.wall_time_s}, fh, indent=2)
        fh.write("\n")

    prof = result.profile
    with open(os.path.join(out_dir, "profile.csv"), "w", encoding="utf-8") as fh:
        fh.write("t_start_s,harvest_j,mppt_loss_j,converter_loss_j,"
                 "soc_j,sensor_j,storage_delta_j\n")
        for k in range(len(prof)):
            fh.write(",".join((
                _fmt(prof.t_start[k]), _fmt(prof.harvest[k]),
                _fmt(prof.mppt_loss[k]), _fmt(prof.converter_loss[k]),
                _fmt(prof.soc_energy[k]), _fmt(prof.sensor_energy[k]),
                _fmt(prof.storage_delta[k]))) + "\n")

    act = result.activity
    with open(os.path.join(out_dir, "activity.csv"), "w", encoding="utf-8") as fh:
        fh.write("t_start_s,on,label\n")
        step = act.step_len
        for k in range(len(act)):
            fh.write(f"{_fmt(k * step)},{int(act.on_off[k])},"
                     f"{PHASES[act.labels[k]]}\n")

    with open(os.path.join(out_dir, "voltage.csv"), "w", encoding="utf-8") as fh:
        fh.write("t_s,v_cap\n")
        for k in range(len(result.voltage_t)):
            fh.write(f"{_fmt(result.voltage_t[k])},{_fmt(result.voltage_v[k])}\n")

    with open(os.path.join(out_dir, "events.csv"), "w", encoding="utf-8") as fh:
        fh.write("t_s,powered_at_event\n")
        for row in result.event_log:
            fh.write(f"{_fmt(row[0])},{int(row[1])}\n")


def load_result(out_dir: str) -> SimResult:
    """Reconstruct a result from its files (for comparisons and re-rendering)."""
    with open(os.path.join(out_dir, "result.json"), "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    stack_d = payload["stack"]
    ledger = EnergyLedger(
        harvest_input=stack_d["harvest_input_j"],
        mppt_loss=stack_d["mppt_loss_j"],
        storage_loss_leak=stack_d["storage_loss_leak_j"],
        storage_loss_esr=stack_d["storage_loss_esr_j"],
        storage_residual=stack_d["storage_residual_j"],
        converter_loss=stack_d["converter_loss_j"],
        initial_storage=stack_d["initial_storage_j"],
        sss_by_activity={k: stack_d["sss_by_activity_j"].get(k, 0.0)
                         for k in LEDGER_ACTIVITIES},
    )
    stack = EnergyStack(ledger=ledger, duration_s=payload["duration_s"],
                        run_id=payload.get("run_id", ""),
                        config_hash=payload.get("config_hash", ""))

    prof_rows = np.loadtxt(os.path.join(out_dir, "profile.csv"),
                           delimiter=",", skiprows=1, ndmin=2)
    if prof_rows.size == 0:
        prof_rows = prof_rows.reshape(0, 7)
    step = (prof_rows[1, 0] - prof_rows[0, 0]) if len(prof_rows) > 1 else 0.2
    profile = EnergyStackProfile(
        step_len=float(step), t_start=prof_rows[:, 0], harvest=prof_rows[:, 1],
        mppt_loss=prof_rows[:, 2], converter_loss=prof_rows[:, 3],
        soc_energy=prof_rows[:, 4], sensor_energy=prof_rows[:, 5],
        storage_delta=prof_rows[:, 6])

    phase_idx = {name: i for i, name in enumerate(PHASES)}
    ons: list[int] = []
    labs: list[int] = []
    with open(os.path.join(out_dir, "activity.csv"), "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            _, on, label = line.strip().split(",")
            ons.append(int(on))
            labs.append(phase_idx[label])
    activity = ActivityProfile(step_len=float(step),
                               on_off=np.asarray(ons, dtype=bool),
                               labels=np.asarray(labs, dtype=np.int8))

    volt = np.loadtxt(os.path.join(out_dir, "voltage.csv"),
                      delimiter=",", skiprows=1, ndmin=2)
    if volt.size == 0:
        volt = volt.reshape(0, 2)
    ev_path = os.path.join(out_dir, "events.csv")
    ev = np.empty((0, 2))
    if os.path.exists(ev_path):
        with open(ev_path, "r", encoding="utf-8") as fh:
            lines = fh.read().strip().splitlines()[1:]
        if lines:
            ev = np.array([[float(x) for x in ln.split(",")] for ln in lines])

    return SimResult(
        stack=stack, profile=profile, activity=activity,
        throughput_bytes=int(payload["throughput_bytes"]),
        boots=int(payload["boots"]),
        events_offered=int(payload["events"]["offered"]),
        events_detected=int(payload["events"]["detected"]),
        events_detected_at_event=int(payload["events"]["detected_at_event"]),
        events_observed=int(payload["events"]["detected_at_next_sample"]),
        on_time_s=float(payload["on_time_s"]),
        duration_s=float(payload["duration_s"]),
        wall_time_s=0.0,
        v_cap_final=float(payload["final"]["v_cap"]),
        converter_on_final=bool(payload["final"]["converter_on"]),
        voltage_t=volt[:, 0], voltage_v=volt[:, 1],
        event_log=ev,
    )
