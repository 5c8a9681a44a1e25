import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehsim.app import AppSpec, preset
from ehsim.engine import SimConfig, simulate
from ehsim.scaling import (
    PlanError, PowerProfile, ScalingPlan, build_experiment, compute_sf,
    max_speedup, predict_throughput, profile_application, rescale_timeline,
    scaled_average_power,
)
from ehsim.ess import EssConfig
from ehsim.traces import EventTrace, synthetic_solar_trace


def test_profile_hand_oracle():
    # flat 2 mW for 1 s of each 20 s period, 0.1 mW sleep
    app = AppSpec(t_sample_period=20.0, t_sample=0.6, t_comm=0.4,
                  n_per_comm=1, p_sample=2e-3, p_comm=2e-3, p_idle=1e-4,
                  name="hand")
    prof = profile_application(app, 3600.0)
    assert prof.p_active_avg == pytest.approx(1e-4, rel=1e-3)
    assert prof.p_idle_avg == pytest.approx(9.5e-5, rel=1e-3)
    assert prof.t_active == pytest.approx(1.0)
    assert prof.t_app_period == pytest.approx(20.0)


def test_profile_zero_idle_power():
    app = AppSpec(t_sample_period=20.0, t_sample=0.6, t_comm=0.4,
                  p_sample=2e-3, p_comm=2e-3, p_idle=0.0)
    prof = profile_application(app, 600.0)
    assert prof.p_idle_avg == 0.0


def test_profile_deterministic():
    app = preset("PMS")
    a = profile_application(app, 1800.0)
    b = profile_application(app, 1800.0)
    assert a == b


def test_profile_requires_one_period():
    with pytest.raises(PlanError):
        profile_application(preset("TMP1"), 1.0)


def hand_profile(pa=2e-3, pi=1e-4, ta=1.0, T=20.0):
    return PowerProfile(p_active_avg=pa, p_idle_avg=pi, t_active=ta,
                        t_app_period=T, theta_profiling=1200,
                        t_profiling=3600.0)


def test_compute_sf_collapses_without_idle_power():
    prof = hand_profile(pi=0.0)
    for s_tp in (1.0, 2.5, 7.0):
        assert compute_sf(prof, s_tp) == pytest.approx(s_tp, rel=1e-12)


def test_compute_sf_identity_at_one():
    assert compute_sf(hand_profile(), 1.0) == pytest.approx(1.0, rel=1e-12)


def test_compute_sf_matches_roundtrip_oracle():
    prof = hand_profile()
    s_f = compute_sf(prof, 3.0)
    assert s_f == pytest.approx(3.1055, abs=1e-4)
    # plugging back: scaled average power equals 3 x (Pa + Pi) = 6.3 mW
    assert scaled_average_power(prof, s_f) == pytest.approx(
        3.0 * (2e-3 + 1e-4), rel=1e-12)


def test_compute_sf_degenerate_denominator():
    prof = hand_profile(pa=1e-4, pi=5e-3, ta=10.0, T=20.0)
    with pytest.raises(PlanError):
        compute_sf(prof, 2.0)


@given(pa=st.floats(min_value=1e-5, max_value=1.0),
       ratio=st.floats(min_value=0.0, max_value=0.5),
       duty=st.floats(min_value=0.01, max_value=0.5),
       T=st.floats(min_value=1.0, max_value=600.0),
       s_tp=st.floats(min_value=1.0, max_value=12.0))
@settings(max_examples=300, deadline=None)
def test_sf_roundtrip_property(pa, ratio, duty, T, s_tp):
    prof = PowerProfile(p_active_avg=pa, p_idle_avg=pa * ratio,
                        t_active=duty * T, t_app_period=T,
                        theta_profiling=1, t_profiling=T)
    try:
        s_f = compute_sf(prof, s_tp)
    except PlanError:
        return
    target = s_tp * (prof.p_active_avg + prof.p_idle_avg)
    assert abs(scaled_average_power(prof, s_f) - target) <= 1e-9 * target
    # monotone in the time/power factor
    if s_tp >= 1.5:
        assert compute_sf(prof, s_tp) > compute_sf(prof, s_tp - 0.5) - 1e-12


def test_max_speedup_back_to_back_app():
    # tasks already run back to back: the bound T_S/(t_S+t_C) is 1
    app = AppSpec(t_sample_period=1.5, t_sample=1.0, t_comm=0.5,
                  p_sample=2e-3, p_comm=2e-3, p_idle=0.0)
    prof = PowerProfile(p_active_avg=2e-3, p_idle_avg=0.0, t_active=1.5,
                        t_app_period=1.5000001, theta_profiling=1,
                        t_profiling=100.0)
    s_tp, s_f, binding = max_speedup(prof, app)
    assert (s_tp, s_f) == (1.0, 1.0)
    assert binding == "schedulability"


def test_max_speedup_matches_tuned_presets():
    expectations = {"TMP1": (3, 3.4), "TMP2": (2, 2.6),
                    "IMU": (7, 10.9), "PMS": (6, 10.9)}
    for name, (want_tp, want_f) in expectations.items():
        app = preset(name)
        prof = profile_application(app, 3600.0)
        s_tp, s_f, binding = max_speedup(prof, app)
        assert s_tp == want_tp, name
        assert s_f == pytest.approx(want_f, abs=0.05), name
        assert binding == "schedulability"


def test_max_speedup_env_cap_binds_before_schedulability():
    app = preset("TOF")
    prof = profile_application(app, 3600.0)
    # without a cap the schedulability bound is far away for this preset
    s_tp_free, _, _ = max_speedup(prof, app)
    assert s_tp_free > 10
    s_tp, s_f, binding = max_speedup(prof, app, env_power_cap=220.0,
                                     peak_input=20.5)
    assert s_tp == 10
    assert s_f == pytest.approx(12.3, abs=0.05)
    assert binding == "env_power_cap"


def test_plan_validation():
    with pytest.raises(PlanError):
        ScalingPlan(mode="st_up", s_tp=2.0, s_f=2.0)
    with pytest.raises(PlanError):
        ScalingPlan(mode="realtime", s_tp=2.0)
    with pytest.raises(PlanError):
        ScalingPlan(mode="warp9", s_tp=2.0)


def test_build_experiment_realtime_scales_amplitude_only():
    tr = synthetic_solar_trace(days=1, cadence_s=600)
    app = preset("TMP1")
    plan = ScalingPlan(mode="realtime", s_i=2.0)
    tr2, ev2, app2 = build_experiment(plan, tr, None, app)
    np.testing.assert_array_equal(tr2.t, tr.t)
    np.testing.assert_allclose(tr2.g, tr.g * 2.0)
    assert app2 == app
    assert ev2 is None


def test_build_experiment_st_up_leaves_app_unscaled():
    tr = synthetic_solar_trace(days=1, cadence_s=600)
    ev = EventTrace(t=np.array([1000.0, 2000.0]))
    app = preset("TMP1")
    plan = ScalingPlan(mode="st_up", s_tp=4.0, s_i=0.5)
    tr2, ev2, app2 = build_experiment(plan, tr, ev, app)
    assert app2 == app
    np.testing.assert_allclose(tr2.t, tr.t / 4.0)
    np.testing.assert_allclose(tr2.g, tr.g * 0.5)  # amplitude: s_i only
    np.testing.assert_allclose(ev2.t, ev.t / 4.0)


def test_build_experiment_st_sp_preserves_trace_integral():
    tr = synthetic_solar_trace(days=1, cadence_s=600)
    app = preset("TMP1")
    plan = ScalingPlan(mode="st_sp", s_tp=2.0, s_f=2.2, s_i=1.0)
    tr_rt, _, _ = build_experiment(ScalingPlan(mode="realtime"), tr, None, app)
    tr_sp, _, app_sp = build_experiment(plan, tr, None, app)
    assert abs(tr_sp.integral() - tr_rt.integral()) <= 1e-9 * tr_rt.integral()
    assert app_sp.t_sample_period == pytest.approx(20.0 / 2.2)


class _FakeResult:
    def __init__(self, bytes_, on_time):
        self.throughput_bytes = bytes_
        self.on_time_s = on_time


def test_predict_throughput_identity_and_eq_arithmetic():
    prof = PowerProfile(p_active_avg=1e-3, p_idle_avg=0.0, t_active=1.0,
                        t_app_period=20.0, theta_profiling=1200,
                        t_profiling=3600.0)
    rt = ScalingPlan(mode="realtime")
    assert predict_throughput(rt, _FakeResult(500, 100.0), prof) == 500
    one = ScalingPlan(mode="st_sp", s_tp=1.0, s_f=1.0)
    assert predict_throughput(one, _FakeResult(0, 3600.0), prof) \
        == pytest.approx(1200.0)
    ten = ScalingPlan(mode="st_sp", s_tp=10.0, s_f=10.0)
    assert predict_throughput(ten, _FakeResult(0, 360.0), prof) \
        == pytest.approx(1200.0)
    up = ScalingPlan(mode="st_up", s_tp=3.0)
    assert predict_throughput(up, _FakeResult(100, 0.0)) == pytest.approx(300.0)


def test_rescale_identity():
    tr = synthetic_solar_trace(days=1, peak=20.0, cadence_s=600)
    ess = EssConfig.ideal(capacitance=0.5)
    app = preset("TMP1")
    res = simulate(tr, None, ess, app, SimConfig(dt_quiescent=0.2))
    assert rescale_timeline(res, 1.0) is res


def test_rescale_stretches_and_conserves():
    tr = synthetic_solar_trace(days=1, peak=20.0, cadence_s=600)
    ess = EssConfig.ideal(capacitance=0.5)
    app = preset("TMP1")
    res = simulate(tr, None, ess, app, SimConfig(dt_quiescent=0.2))
    s = 3.0
    out = rescale_timeline(res, s)
    assert out.duration_s == pytest.approx(res.duration_s * s)
    assert len(out.activity) == pytest.approx(len(res.activity) * s)
    # on-time re-binned within one bin of the stretched total
    on_scaled = res.activity.on_off.sum() * res.activity.step_len * s
    on_out = out.activity.on_off.sum() * out.activity.step_len
    assert abs(on_out - on_scaled) <= s * out.activity.step_len + 1e-9
    # energies are redistributed, not created
    assert out.profile.harvest.sum() == pytest.approx(
        res.profile.harvest.sum(), rel=1e-9)
    assert out.profile.storage_delta.sum() == pytest.approx(
        res.profile.storage_delta.sum(), rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(out.voltage_t, res.voltage_t * s)


def test_fractional_rescale_binning():
    tr = synthetic_solar_trace(days=1, peak=20.0, cadence_s=600)
    ess = EssConfig.ideal(capacitance=0.5)
    app = preset("TMP1")
    res = simulate(tr, None, ess, app, SimConfig(dt_quiescent=0.2))
    out = rescale_timeline(res, 2.5)
    assert len(out.activity) == int(round(len(res.activity) * 2.5))
    assert out.profile.soc_energy.sum() == pytest.approx(
        res.profile.soc_energy.sum(), rel=1e-9)
