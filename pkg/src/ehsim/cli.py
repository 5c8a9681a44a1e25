"""Command-line orchestration: simulate, profile, plan, compare, sweep, stacks.

Every command takes a JSON config (--config), writes machine-readable
outputs under --out, and stamps them with the config hash so runs are
reproducible and diffable. Exit codes: 0 success, 2 configuration error,
3 runtime/consistency error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .app import AppError, AppSpec
from .config import (HarnessConfig, build_app, build_ess, build_sim,
                     load_config, load_events, load_trace, save_result,
                     load_result)
from .engine import (ClosureError, ConfigError, SimResult, simulate)
from .ess import EssError
from .metrics import compute_ape, mismatch_spans, throughput_error
from .scaling import (PlanError, PowerProfile, ScalingPlan, build_experiment,
                      compute_sf, max_speedup, predict_throughput,
                      profile_application, rescale_timeline)
from .traces import TraceError

_CONFIG_ERRORS = (ConfigError, TraceError, AppError, EssError, PlanError,
                  FileNotFoundError, json.JSONDecodeError, KeyError,
                  TypeError, ValueError)


def _profile_from_config(cfg: HarnessConfig, app: AppSpec) -> PowerProfile:
    block = cfg.raw.get("profile", {})
    duration = float(block.get("duration_s", 3600.0))
    supply = float(block.get("supply_v", 3.3))
    return profile_application(app, duration, supply_v=supply)


def _profile_to_dict(p: PowerProfile) -> dict:
    return {"p_active_avg_w": p.p_active_avg, "p_idle_avg_w": p.p_idle_avg,
            "t_active_s": p.t_active, "t_app_period_s": p.t_app_period,
            "theta_profiling_bytes": p.theta_profiling,
            "t_profiling_s": p.t_profiling}


def _profile_from_dict(d: dict) -> PowerProfile:
    return PowerProfile(p_active_avg=d["p_active_avg_w"],
                        p_idle_avg=d["p_idle_avg_w"],
                        t_active=d["t_active_s"],
                        t_app_period=d["t_app_period_s"],
                        theta_profiling=int(d["theta_profiling_bytes"]),
                        t_profiling=d["t_profiling_s"])


def _resolve_plan(cfg: HarnessConfig, app: AppSpec, s_i: float,
                  mode_override: str | None,
                  profile: PowerProfile | None = None
                  ) -> tuple[ScalingPlan, PowerProfile | None]:
    """Build the scaling plan from the config block plus CLI override."""
    block = dict(cfg.raw.get("plan", {}))
    mode = (mode_override or block.get("mode", "realtime")).replace("-", "_")
    s_i = float(block.get("s_i", s_i))
    if mode == "realtime":
        return ScalingPlan(mode="realtime", s_i=s_i), profile
    target = block.get("s_tp", "max")
    if mode == "st_up":
        if target == "max":
            raise PlanError("st_up needs an explicit s_tp")
        return ScalingPlan(mode="st_up", s_tp=float(target), s_i=s_i), profile
    if profile is None:
        profile = _profile_from_config(cfg, app)
    if target == "max":
        s_tp, s_f, binding = max_speedup(profile, app)
        return (ScalingPlan(mode=mode, s_tp=s_tp, s_f=s_f, s_i=s_i,
                            binding=binding), profile)
    s_f = block.get("s_f")
    if s_f is None:
        s_f = compute_sf(profile, float(target))
    return (ScalingPlan(mode=mode, s_tp=float(target), s_f=float(s_f),
                        s_i=s_i), profile)


def _run_experiment(trace, events, ess, app, sim_cfg, plan: ScalingPlan,
                    config_hash: str) -> SimResult:
    trace_x, events_x, app_x = build_experiment(plan, trace, events, app)
    cfg = sim_cfg
    if plan.mode == "st_sp_sn":
        cfg = replace(cfg, skip_nights=True)
    return simulate(trace_x, events_x, ess, app_x, cfg,
                    config_hash=config_hash)


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    trace = load_trace(cfg)
    events = load_events(cfg, args.seed)
    ess = build_ess(cfg)
    app, s_i = build_app(cfg)
    sim_cfg = build_sim(cfg)
    plan, profile = _resolve_plan(cfg, app, s_i, args.mode)
    result = _run_experiment(trace, events, ess, app, sim_cfg, plan, cfg.hash)
    out = args.out or "out"
    save_result(result, out)
    _write_json(os.path.join(out, "plan.json"),
                {**plan.as_dict(), "config_hash": cfg.hash,
                 **({"profile": _profile_to_dict(profile)} if profile else {})})
    led = result.stack.ledger
    print(f"simulate[{plan.mode}] throughput={result.throughput_bytes}B "
          f"harvest={led.harvest_input:.3f}J sss={led.sss_total:.3f}J "
          f"residual={led.storage_residual:.3f}J "
          f"closure_err={led.closure_error():.2e}J -> {out}")
    return 0


def cmd_profile(args) -> int:
    cfg = load_config(args.config)
    app, _ = build_app(cfg)
    profile = _profile_from_config(cfg, app)
    out = args.out or "out"
    _write_json(os.path.join(out, "profile.json"),
                {**_profile_to_dict(profile), "config_hash": cfg.hash,
                 "app": app.name})
    print(f"profile app={app.name or 'custom'} "
          f"p_active_avg={profile.p_active_avg:.6g}W "
          f"p_idle_avg={profile.p_idle_avg:.6g}W "
          f"theta={profile.theta_profiling}B -> {out}/profile.json")
    return 0


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    app, s_i = build_app(cfg)
    if args.profile:
        with open(args.profile, "r", encoding="utf-8") as fh:
            profile = _profile_from_dict(json.load(fh))
    else:
        profile = _profile_from_config(cfg, app)
    target = args.s_tp or cfg.raw.get("plan", {}).get("s_tp", "max")
    mode = (args.mode or cfg.raw.get("plan", {}).get("mode", "st_sp"))
    mode = mode.replace("-", "_")
    if mode == "realtime":
        mode = "st_sp"  # planning is about acceleration
    if target == "max":
        s_tp, s_f, binding = max_speedup(profile, app)
    else:
        s_tp = float(target)
        s_f = compute_sf(profile, s_tp)
        bound = app.t_sample_period / app.min_sample_period
        if s_f > bound * (1 + 1e-12):
            raise PlanError(
                f"s_tp={s_tp:g} needs s_f={s_f:.4g} which exceeds the "
                f"schedulability bound {bound:.4g}")
        binding = "requested"
    if mode == "st_up":
        s_f = 1.0
    plan = ScalingPlan(mode=mode, s_tp=s_tp, s_f=s_f, s_i=s_i, binding=binding)
    out = args.out or "out"
    _write_json(os.path.join(out, "plan.json"),
                {**plan.as_dict(), "config_hash": cfg.hash,
                 "profile": _profile_to_dict(profile)})
    print(f"plan mode={plan.mode} s_tp={plan.s_tp:g} s_f={plan.s_f:.4g} "
          f"s_i={plan.s_i:g} binding={plan.binding} -> {out}/plan.json")
    return 0


def cmd_compare(args) -> int:
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan_d = json.load(fh)
    plan = ScalingPlan(mode=plan_d["mode"], s_tp=plan_d["s_tp"],
                       s_f=plan_d["s_f"], s_i=plan_d["s_i"],
                       binding=plan_d.get("binding", ""))
    profile = (_profile_from_dict(plan_d["profile"])
               if "profile" in plan_d else None)
    if args.profile:
        with open(args.profile, "r", encoding="utf-8") as fh:
            profile = _profile_from_dict(json.load(fh))
    baseline = load_result(args.baseline)
    scaled = load_result(args.scaled)
    window = float(args.window)

    predicted = predict_throughput(plan, scaled, profile)
    thr_err = throughput_error(predicted, baseline.throughput_bytes)
    rescaled = rescale_timeline(scaled, plan.s_tp)
    ape_raw = compute_ape(baseline.activity, rescaled.activity, 0.0)
    ape_dtw = compute_ape(baseline.activity, rescaled.activity, window)
    spans = mismatch_spans(baseline.activity, rescaled.activity)

    out = args.out or "out"
    _write_json(os.path.join(out, "report.json"), {
        "mode": plan.mode,
        "s_tp": plan.s_tp,
        "baseline_throughput_bytes": baseline.throughput_bytes,
        "predicted_rt_throughput_bytes": predicted,
        "throughput_error": thr_err,
        "ape_raw": {"epsilon": ape_raw.epsilon, "n_diff": ape_raw.n_diff,
                    "n_total": ape_raw.n_total},
        "ape_dtw": {"epsilon": ape_dtw.epsilon, "n_diff": ape_dtw.n_diff,
                    "n_total": ape_dtw.n_total, "window_s": window},
        "baseline_residual_j": baseline.stack.ledger.storage_residual,
        "scaled_residual_j": scaled.stack.ledger.storage_residual,
    })
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "mismatch_spans.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("t_start_s,t_end_s\n")
        for lo, hi in spans:
            fh.write(f"{lo:.10g},{hi:.10g}\n")
    print(f"compare mode={plan.mode} throughput_error={thr_err:.4f} "
          f"ape_raw={ape_raw.epsilon:.4f} ape_dtw={ape_dtw.epsilon:.4f} "
          f"-> {out}/report.json")
    return 0


def _sweep_cell(payload) -> dict:
    """One sweep cell: an independent simulation (worker-safe)."""
    (trace, events, ess, app, sim_cfg, plan, profile, out_dir, cap, s_i,
     cfg_hash) = payload
    try:
        ess_cell = replace(ess, storage=replace(ess.storage, capacitance=cap))
        plan_cell = replace(plan, s_i=s_i)
        result = _run_experiment(trace, events, ess_cell, app, sim_cfg,
                                 plan_cell, cfg_hash)
        save_result(result, out_dir)
        offered = max(result.events_offered, 1)
        predicted = predict_throughput(plan_cell, result, profile)
        return {
            "capacitance_f": cap, "s_i": s_i, "status": "ok",
            "events_offered": result.events_offered,
            "detected_at_event": result.events_detected_at_event,
            "detected_at_next_sample": result.events_observed,
            "detection_fraction": result.events_detected_at_event / offered,
            "throughput_bytes": result.throughput_bytes,
            "predicted_rt_throughput_bytes": predicted,
            "storage_residual_j": result.stack.ledger.storage_residual,
        }
    except Exception as exc:  # cell failures stay isolated
        return {"capacitance_f": cap, "s_i": s_i, "status": "error",
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sweep = cfg.raw.get("sweep")
    if not sweep or not sweep.get("capacitance") or not sweep.get("s_i"):
        raise ConfigError("sweep block needs non-empty capacitance and s_i grids")
    caps = [float(c) for c in sweep["capacitance"]]
    sis = [float(s) for s in sweep["s_i"]]
    workers = args.workers or int(sweep.get("workers", 1))
    trace = load_trace(cfg)
    events = load_events(cfg, args.seed)
    ess = build_ess(cfg)
    app, s_i_default = build_app(cfg)
    sim_cfg = build_sim(cfg)
    plan, profile = _resolve_plan(cfg, app, s_i_default, args.mode)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)

    jobs = []
    for cap in caps:
        for s_i in sis:
            cell_dir = os.path.join(out, f"cell_C{cap:g}_SI{s_i:g}")
            jobs.append((trace, events, ess, app, sim_cfg, plan, profile,
                         cell_dir, cap, s_i, cfg.hash))

    if workers <= 1:
        rows = [_sweep_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))

    failures = [r for r in rows if r["status"] != "ok"]
    fields = ["capacitance_f", "s_i", "status", "events_offered",
              "detected_at_event", "detected_at_next_sample",
              "detection_fraction", "throughput_bytes",
              "predicted_rt_throughput_bytes", "storage_residual_j", "error"]
    with open(os.path.join(out, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(str(row.get(f, "")) for f in fields) + "\n")
    with open(os.path.join(out, "heatmap.csv"), "w", encoding="utf-8") as fh:
        fh.write("capacitance_f\\s_i," + ",".join(f"{s:g}" for s in sis) + "\n")
        it = iter(rows)
        for cap in caps:
            cells = [next(it) for _ in sis]
            fh.write(f"{cap:g}," + ",".join(
                f"{c.get('detection_fraction', ''):.6f}"
                if c["status"] == "ok" else "nan" for c in cells) + "\n")
    print(f"sweep {len(caps)}x{len(sis)} cells done, "
          f"{len(failures)} failed -> {out}/heatmap.csv")
    for row in failures:
        print(f"  cell C={row['capacitance_f']} S_I={row['s_i']}: "
              f"{row['error']}", file=sys.stderr)
    return 0


def cmd_stacks(args) -> int:
    result = load_result(args.result)
    led = result.stack.ledger
    rows = [("harvest_input", led.harvest_input),
            ("initial_storage", led.initial_storage),
            ("mppt_loss", led.mppt_loss),
            ("storage_loss_leak", led.storage_loss_leak),
            ("storage_loss_esr", led.storage_loss_esr),
            ("storage_residual", led.storage_residual),
            ("converter_loss", led.converter_loss)]
    rows += [(f"sss_{k}", v) for k, v in led.sss_by_activity.items()]
    total = led.total_input()
    print(f"energy stack ({result.duration_s:.0f} s, "
          f"{result.throughput_bytes} B):")
    for name, val in rows:
        share = 100.0 * val / total if total > 0 else 0.0
        print(f"  {name:<22s} {val:12.6f} J  {share:6.2f}%")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "stack.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("category,energy_j\n")
            for name, val in rows:
                fh.write(f"{name},{val:.10g}\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehsim",
        description="Trace-driven evaluation harness for battery-less IoT nodes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the event-generator seed")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel worker count (sweep)")
        p.add_argument("--mode", default=None,
                       choices=["realtime", "st-sp", "st-sp-sn", "st-up"],
                       help="evaluation mode override")

    p = sub.add_parser("simulate", help="run one simulation")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("profile", help="profile the app at constant supply")
    common(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("plan", help="compute a scaling plan")
    common(p)
    p.add_argument("--profile", default=None, help="profile.json to reuse")
    p.add_argument("--s-tp", dest="s_tp", default=None,
                   help="target time/power factor or 'max'")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("compare", help="compare a scaled run to a baseline")
    common(p, config=False)
    p.add_argument("--baseline", required=True, help="baseline result dir")
    p.add_argument("--scaled", required=True, help="scaled result dir")
    p.add_argument("--plan", required=True, help="plan.json of the scaled run")
    p.add_argument("--profile", default=None, help="profile.json override")
    p.add_argument("--window", default=3600.0, type=float,
                   help="DTW window in seconds")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="design-space sweep over the config grid")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stacks", help="re-render a stored energy stack")
    common(p, config=False)
    p.add_argument("--result", required=True, help="result directory")
    p.set_defaults(func=cmd_stacks)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ClosureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
