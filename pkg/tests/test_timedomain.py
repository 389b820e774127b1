"""Nonlinear integrator and sideband extraction, on the slow test device."""

import math
from dataclasses import replace

import numpy as np
import pytest

from emit_lab.model import probe_amplitude
from emit_lab.response import effective_linewidth, sideband_general
from emit_lab.steadystate import steady_state
from emit_lab.timedomain import (IntegrationDivergedError, SidebandEstimate,
                                 TimeDomainTrace, crosscheck,
                                 extract_sideband, integrate, max_step)

TWO_PI = 2.0 * math.pi


def _quiet(drive):
    return replace(drive, pump_power=0.0, probe_power=0.0)


def test_free_cavity_decays_at_half_kappa(scaled):
    model, drive = scaled
    kappa = model.cavity.kappa
    omega = TWO_PI * 20e3  # fast beat so 8 periods fit inside 4 / kappa
    horizon = 4.0 / kappa
    trace = integrate(model, _quiet(drive), omega, horizon,
                      initial=(1.0 + 0.0j, np.zeros(2), np.zeros(2)))
    # with no drive the field modulus obeys d|a|/dt = -kappa |a| / 2 exactly,
    # whatever the mechanics do to the phase
    mags = np.abs(trace.a_samples)
    expected = np.exp(-0.5 * kappa * trace.times)
    assert np.max(np.abs(mags - expected) / expected) <= 1e-6


def test_pump_only_steady_state_is_a_fixed_point(scaled):
    model, drive = scaled
    drv = replace(drive, probe_power=0.0)
    st1 = steady_state(model, drv)
    omega = model.modes[0].omega_m
    trace = integrate(model, drv, omega, horizon=1e-2)
    drift = np.max(np.abs(trace.a_samples - st1.amplitude))
    assert drift <= 1e-9 * abs(st1.amplitude)
    for k in range(model.n_modes):
        assert np.max(np.abs(trace.q_samples[k] - st1.q_s[k])) \
            <= 1e-9 * abs(st1.q_s[k])


def test_trace_window_spans_eight_beats(scaled):
    model, drive = scaled
    omega = model.modes[0].omega_m
    trace = integrate(model, _quiet(drive), omega, horizon=2e-3,
                      initial=(0.0j, np.zeros(2), np.zeros(2)))
    periods = (trace.t_end - trace.t_start) * omega / TWO_PI
    assert periods == pytest.approx(8.0, abs=1e-9)
    times = trace.times
    assert len(times) == len(trace.a_samples)
    assert times[0] == pytest.approx(trace.t_start)
    assert times[-1] == pytest.approx(trace.t_end)
    assert np.allclose(np.diff(times), trace.dt)


def _synthetic_trace(omega, c_plus, c_minus, n_per=64, periods=8):
    beat = TWO_PI / omega
    dt = beat / n_per
    n = periods * n_per
    t = dt * np.arange(n + 1)
    a = (c_plus * np.exp(-1j * omega * t)
         + c_minus * np.exp(1j * omega * t))
    return TimeDomainTrace(dt=dt, t_start=0.0, t_end=float(t[-1]),
                           a_samples=a,
                           q_samples=np.zeros((1, n + 1)),
                           v_samples=np.zeros((1, n + 1)),
                           omega_beat=omega)


def _zero_steady(scaled):
    model, drive = scaled
    return steady_state(model, _quiet(drive))


def test_extraction_recovers_planted_tones(scaled):
    st0 = _zero_steady(scaled)
    omega = TWO_PI * 1e4
    est = extract_sideband(_synthetic_trace(omega, 0.3, 0.0), st0)
    assert abs(est.a_plus_td - 0.3) <= 1e-9
    assert abs(est.a_minus_td) <= 1e-9
    assert est.residual_harmonics <= 1e-9

    est2 = extract_sideband(
        _synthetic_trace(omega, 0.2 + 0.0j, 0.05 + 0.02j), st0)
    assert abs(est2.a_plus_td - 0.2) <= 1e-9
    assert abs(est2.a_minus_td - (0.05 + 0.02j)) <= 1e-9
    assert est2.residual_harmonics <= 1e-9


def test_extraction_flags_leftover_power(scaled):
    st0 = _zero_steady(scaled)
    omega = TWO_PI * 1e4
    trace = _synthetic_trace(omega, 0.3, 0.0)
    third = 0.1 * np.exp(-3j * omega * trace.times)
    spiked = TimeDomainTrace(dt=trace.dt, t_start=trace.t_start,
                             t_end=trace.t_end,
                             a_samples=trace.a_samples + third,
                             q_samples=trace.q_samples,
                             v_samples=trace.v_samples,
                             omega_beat=omega)
    est = extract_sideband(spiked, st0)
    # planted third harmonic carries 1/10 of the sideband power
    expected = 0.01 / (0.09 + 0.01)
    assert est.residual_harmonics == pytest.approx(expected, rel=1e-6)


def test_extraction_rejects_partial_periods(scaled):
    st0 = _zero_steady(scaled)
    omega = TWO_PI * 1e4
    trace = _synthetic_trace(omega, 0.3, 0.0)
    clipped = TimeDomainTrace(dt=trace.dt, t_start=trace.t_start,
                              t_end=trace.t_end - 0.5 * TWO_PI / omega,
                              a_samples=trace.a_samples[:-32],
                              q_samples=trace.q_samples[:, :-32],
                              v_samples=trace.v_samples[:, :-32],
                              omega_beat=omega)
    with pytest.raises(ValueError, match="integer number of beat periods"):
        extract_sideband(clipped, st0)
    short = _synthetic_trace(omega, 0.3, 0.0, periods=3)
    with pytest.raises(ValueError, match=">= 4"):
        extract_sideband(short, st0)


def test_integrate_validates_inputs(scaled):
    model, drive = scaled
    with pytest.raises(ValueError, match="must be positive"):
        integrate(model, drive, -1.0, 1e-2)
    with pytest.raises(ValueError, match="dt too coarse"):
        integrate(model, drive, model.modes[0].omega_m, 1e-2,
                  dt=1.5 * max_step(model))
    with pytest.raises(ValueError, match="horizon shorter"):
        integrate(model, drive, model.modes[0].omega_m,
                  horizon=3.0 * TWO_PI / model.modes[0].omega_m)


def test_runaway_state_raises_diverged(scaled):
    model, drive = scaled
    with pytest.raises(IntegrationDivergedError, match="integration diverged"):
        integrate(model, _quiet(drive), model.modes[0].omega_m, 1e-2,
                  initial=(1.0 + 0.0j, np.zeros(2), np.full(2, 1e200)))


def test_uncoupled_device_matches_the_linear_solver_tightly(scaled):
    model, drive = scaled
    bare = replace(model, modes=tuple(replace(m, g=0.0) for m in model.modes))
    rep = crosscheck(bare, drive, bare.modes[0].omega_m)
    # no mechanics, so the only differences are quadrature and step error
    assert rep.rel_err_aplus <= 1e-5
    assert rep.rel_err_aminus <= 1e-6
    assert rep.residual_harmonics <= 1e-6


def test_crosscheck_at_the_first_window(scaled):
    model, drive = scaled
    rep = crosscheck(model, drive, model.modes[0].omega_m)
    assert rep.rel_err_aplus <= 1e-2
    assert rep.rel_err_aminus <= 2e-2
    assert rep.linearity_defect <= 1e-3
    assert rep.residual_harmonics <= 1e-4


def test_crosscheck_rejects_strong_probes(scaled):
    model, drive = scaled
    with pytest.raises(ValueError, match="probe_ratio"):
        crosscheck(model, drive, model.modes[0].omega_m, probe_ratio=0.5)


def test_extracted_sideband_converges_in_dt(scaled):
    model, drive = scaled
    omega = model.modes[0].omega_m
    st1 = steady_state(model, drive)
    ratio = 1e-3
    omega_pu = model.cavity.omega_c - drive.pump_detuning
    drv = replace(drive, probe_power=drive.pump_power * ratio ** 2
                  * ((omega_pu + omega) / omega_pu))
    gamma_min = min(effective_linewidth(model, st1, k)
                    for k in range(model.n_modes))
    horizon = 14.0 / gamma_min + 8.0 * TWO_PI / omega
    runs = []
    for dt in (None, 1.8e-7):  # default is about 3.8e-7
        trace = integrate(model, drv, omega, horizon, dt=dt)
        est = extract_sideband(trace, st1)
        e_pr = probe_amplitude(drv, model.cavity, omega)
        runs.append(est.a_plus_td / e_pr)
    assert abs(runs[1] - runs[0]) <= 1e-4 * abs(runs[0])
    # and both sit close to the linear answer
    a_lin, _, _ = sideband_general(model, st1, omega)
    assert abs(runs[1] - a_lin) <= 1e-2 * abs(a_lin)
