"""Release gate: the ten headline checks, one test per criterion.

Each test asserts the advertised tolerance directly, so `pytest -v` on this
file reads as a pass/fail scoreboard.  Criterion 9 contains two clauses the
model genuinely does not satisfy over the full advertised parameter domain
(weak Stokes-channel gain at the domain corner, and the reflected-delay
sign reversal at high pump power); that test reports the measured
violations instead of papering over them.  The analysis lives in the build
ledger (notes/decisions.md, kept outside the package).
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from emit_lab.analysis import (delay_vs_power, find_transparency_peaks,
                               width_vs_power, window_fwhm, window_grid)
from emit_lab.cli import main
from emit_lab.model import TWO_PI, paper_defaults, pump_amplitude, with_drive
from emit_lab.response import (cooperativity, degenerate_linewidth,
                               effective_linewidth, eta, sideband_closed_form,
                               sideband_general, spectrum_at)
from emit_lab.steadystate import (photon_number_roots, spring_constant,
                                  steady_state)
from emit_lab.timedomain import crosscheck

from conftest import CONFIG_DIR, bisect_photon_roots, rel_err

PAPER_CFG = str(CONFIG_DIR / "paper.cfg")


def test_criterion_01_bare_cavity_limit(paper_model, paper_drive):
    """No coupling or no pump: the probe sees the bare hanger response."""
    kappa = paper_model.cavity.kappa
    kappa_e = paper_model.cavity.kappa_e
    dip = 1.0 - kappa_e / kappa
    tau_expect = -2.0 * kappa_e / (kappa * (kappa - kappa_e))

    uncoupled = replace(paper_model, modes=tuple(
        replace(m, g=0.0) for m in paper_model.modes))
    off = with_drive(paper_drive, pump_power=0.0)
    for model, drive in ((uncoupled, paper_drive), (paper_model, off)):
        steady = steady_state(model, drive)
        point = spectrum_at(model, steady, [drive.pump_detuning])[0]
        assert abs(abs(point.t_p) - dip) <= 1e-12
        assert rel_err(point.tau_t, tau_expect) <= 1e-3


def test_criterion_02_closed_form_equals_general_solve(paper_model,
                                                       paper_drive):
    """Factored sideband formula against the 2x2 solve, 1000 draws, < 1 s.

    Draws near zero detuning can be bistable; the identity is a per-branch
    statement, so the lowest branch is used throughout.
    """
    rng = np.random.default_rng(20260819)
    omega2 = paper_model.modes[1].omega_m
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        drive = with_drive(paper_drive,
                           pump_power=rng.uniform(0.0, 2e-6),
                           pump_detuning=rng.uniform(-omega2, omega2))
        steady = steady_state(paper_model, drive, root_policy="lowest")
        omega = rng.uniform(0.0, 2.0 * omega2)
        a_gen, _, _ = sideband_general(paper_model, steady, omega)
        a_closed = sideband_closed_form(paper_model, steady, omega)
        if abs(a_gen) > 0.0:
            worst = max(worst, abs(a_closed - a_gen) / abs(a_gen))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-10
    assert elapsed < 1.0


def test_criterion_03_photon_cubic_solver(paper_model, paper_drive):
    """Residual bound on every root; bisection agreement on unique roots."""
    rng = np.random.default_rng(7)
    omega2 = paper_model.modes[1].omega_m
    s = spring_constant(paper_model)
    kappa = paper_model.cavity.kappa
    accepted = tries = 0
    while accepted < 100:
        tries += 1
        assert tries < 2000, "random draws keep landing on bistable points"
        drive = with_drive(paper_drive,
                           pump_power=rng.uniform(0.0, 2e-6),
                           pump_detuning=rng.uniform(-omega2, omega2))
        e_pu = pump_amplitude(drive, paper_model.cavity)
        rhs = 0.5 * paper_model.cavity.kappa_e * e_pu ** 2
        roots = photon_number_roots(paper_model, drive)
        for n in roots:
            det = drive.pump_detuning - s * n
            resid = abs(n * ((0.5 * kappa) ** 2 + det * det) - rhs)
            assert resid <= 1e-10 * max(1.0, rhs)
        if len(roots) != 1:
            continue
        accepted += 1
        oracle = bisect_photon_roots(paper_model, drive)
        if len(oracle) == 1 and roots[0] > 0.0:
            assert abs(oracle[0] - roots[0]) / roots[0] <= 1e-9


def test_criterion_04_two_transparency_windows(paper_model, paper_drive):
    """Defaults: two near-unity windows, one per mechanical mode."""
    steady = steady_state(paper_model, paper_drive)
    omega1 = paper_model.modes[0].omega_m
    grid = omega1 + TWO_PI * np.linspace(-0.2e6, 0.6e6, 3201)
    points = spectrum_at(paper_model, steady, grid, with_delays=False)
    peaks = find_transparency_peaks(points)
    assert len(peaks) == 2
    for k, mode in enumerate(paper_model.modes):
        gamma_eff = effective_linewidth(paper_model, steady, k)
        omega_pk, height = min(peaks, key=lambda p: abs(p[0] - mode.omega_m))
        assert abs(omega_pk - mode.omega_m) <= gamma_eff / 10.0
        assert height >= 0.95


def _measured_width(model, drive, center):
    steady = steady_state(model, drive)
    guess = max(effective_linewidth(model, steady, k)
                for k in range(model.n_modes))
    grid = window_grid(model, guess, center)
    points = spectrum_at(model, steady, grid, with_delays=False)
    peaks = find_transparency_peaks(points)
    peak = min(peaks, key=lambda p: abs(p[0] - center))
    return window_fwhm(points, peak[0]), steady


def test_criterion_05_degenerate_window_widths(paper_model, paper_drive):
    """Identical modes: one window of width gamma1 (1 + 2 C1).

    Decoupling the second mode shrinks it to gamma1 (1 + C1).
    """
    first = paper_model.modes[0]
    drive = with_drive(paper_drive, pump_power=4e-6,
                       pump_detuning=first.omega_m)

    degenerate = replace(paper_model,
                         modes=(first, replace(first, label="mode2")))
    fwhm_deg, steady = _measured_width(degenerate, drive, first.omega_m)
    assert rel_err(fwhm_deg, degenerate_linewidth(degenerate, steady)) <= 0.10

    single = replace(paper_model,
                     modes=(first, replace(first, g=0.0, label="mode2")))
    fwhm_single, steady_s = _measured_width(single, drive, first.omega_m)
    assert rel_err(fwhm_single,
                   effective_linewidth(single, steady_s, 0)) <= 0.10
    assert fwhm_single < fwhm_deg


def test_criterion_06_width_scales_linearly_with_power(paper_model,
                                                       paper_drive):
    gamma1 = paper_model.modes[0].gamma
    sweep = width_vs_power(paper_model, paper_drive,
                           np.linspace(0.1e-6, 0.5e-6, 5))
    for row in sweep.rows:
        assert row.error is None
        assert rel_err(row.fwhm, gamma1 * (1.0 + row.coop[0])) <= 0.10
    wide = width_vs_power(paper_model, paper_drive,
                          np.linspace(0.1e-6, 1.5e-6, 15))
    assert wide.r_squared > 0.98


def test_criterion_07_delay_extrema_and_damping_scaling(paper_model,
                                                        paper_drive):
    powers = np.logspace(-9, math.log10(2e-6), 60)
    base = delay_vs_power(paper_model, paper_drive, powers)
    assert rel_err(base.best_tau_t[1], 0.12e-3) <= 0.25
    assert rel_err(base.best_tau_r[1], -0.27e-3) <= 0.25

    narrow = replace(paper_model, modes=tuple(
        replace(m, gamma=TWO_PI * 465.0) for m in paper_model.modes))
    halved = delay_vs_power(narrow, paper_drive, powers)
    assert abs(halved.best_tau_t[1] / base.best_tau_t[1] - 2.0) <= 0.2
    assert abs(halved.best_tau_r[1] / base.best_tau_r[1] - 2.0) <= 0.2


def test_criterion_08_time_domain_oracle(scaled):
    """Nonlinear integration agrees with the linear solver to 1% in < 60 s."""
    model, drive = scaled
    omega1 = model.modes[0].omega_m
    omega2 = model.modes[1].omega_m
    t0 = time.perf_counter()
    for omega in (omega1, 0.5 * (omega1 + omega2), omega2):
        report = crosscheck(model, drive, omega, probe_ratio=1e-3)
        assert report.rel_err_aplus <= 1e-2
        assert report.linearity_defect <= 1e-3
    assert time.perf_counter() - t0 < 60.0


def test_criterion_09_property_suite(paper_model, paper_drive):
    """Structural invariants, plus two advertised bounds the model breaks.

    The passing clauses: coupling-sign and mode-order invariance, the
    mechanical response at zero offset and its conjugate symmetry, window
    width monotone in power, and transmitted delay positive over the
    operating power grid.  The failing clauses are asserted last so the
    passing ones are actually exercised; see notes/decisions.md (build
    ledger, outside the package) for the measurements behind the failure.
    """
    steady = steady_state(paper_model, paper_drive)
    omega1 = paper_model.modes[0].omega_m
    omega2 = paper_model.modes[1].omega_m
    kappa = paper_model.cavity.kappa
    grid = omega1 + TWO_PI * np.linspace(-0.2e6, 0.6e6, 801)
    reference = spectrum_at(paper_model, steady, grid, with_delays=False)

    # coupling sign flip: every observable depends on g only through g^2
    flipped_model = replace(paper_model, modes=tuple(
        replace(m, g=-m.g) for m in paper_model.modes))
    flipped = spectrum_at(flipped_model,
                          steady_state(flipped_model, paper_drive),
                          grid, with_delays=False)
    assert all(p.t_p == q.t_p and p.r_p == q.r_p and p.fwm_mag == q.fwm_mag
               for p, q in zip(reference, flipped))

    # mode order is bookkeeping
    swapped_model = replace(paper_model, modes=paper_model.modes[::-1])
    swapped = spectrum_at(swapped_model,
                          steady_state(swapped_model, paper_drive),
                          grid, with_delays=False)
    assert all(p.t_p == q.t_p for p, q in zip(reference, swapped))

    # mechanical susceptibility: unity at zero offset, conjugate symmetric
    for mode in paper_model.modes:
        assert eta(mode, 0.0) == 1.0
        for omega in (0.3 * omega1, omega1, 1.7 * omega2):
            assert abs(eta(mode, -omega) - eta(mode, omega).conjugate()) \
                <= 1e-15 * abs(eta(mode, omega))

    # window width strictly monotone in pump power
    sweep = width_vs_power(paper_model, paper_drive,
                           np.linspace(0.1e-6, 0.5e-6, 5))
    widths = [r.fwhm for r in sweep.rows]
    assert all(b > a for a, b in zip(widths, widths[1:]))

    # delay signs at the first window across the operating power grid
    powers = np.logspace(-9, math.log10(2e-6), 40)
    taus = [delay_vs_power(paper_model, paper_drive, [p]).rows[0]
            for p in powers]
    assert all(r.tau_t > 0.0 for r in taus)

    violations = []

    bad_r = [(r.power, r.tau_r) for r in taus if r.tau_r >= 0.0]
    if bad_r:
        p0, t0 = bad_r[0]
        violations.append(
            f"tau_r < 0 fails for P >= {p0:.3e} W (tau_r = {t0:+.3e} s; "
            "the window broadens until the intra-window dispersion "
            "flattens, crossing near 1.27e-06 W); the P -> 0 limit also "
            "reverts both delays to their bare-cavity signs")

    # passivity over the advertised red-detuned domain
    omgrid = np.linspace(0.0, 2.0 * omega2, 2001)
    worst = (0.0, 0.0, 0.0)
    for det in np.linspace(omega1 - kappa, omega2 + kappa, 5):
        for power in (0.1e-6, 0.5e-6, 1e-6, 2e-6):
            drive = with_drive(paper_drive, pump_power=power,
                               pump_detuning=float(det))
            st = steady_state(paper_model, drive)
            points = spectrum_at(paper_model, st, omgrid, with_delays=False)
            peak = max(abs(p.t_p) for p in points)
            if peak > worst[0]:
                worst = (peak, det, power)
    if worst[0] > 1.0 + 1e-6:
        violations.append(
            f"|t_p| <= 1 + 1e-6 fails: max |t_p| = {worst[0]:.6f} at "
            f"pump detuning {worst[1] / TWO_PI:.3e} Hz, "
            f"P = {worst[2]:.1e} W (weak Stokes-channel probe gain at "
            "off-sideband pumping; the operating point is dynamically "
            "stable, so this is the model's honest prediction)")

    if violations:
        pytest.fail("advertised bounds not satisfied by the model:\n  - "
                    + "\n  - ".join(violations))


def test_criterion_10_reproduction_is_deterministic(tmp_path):
    for figure in (2, 3, 4, 5):
        outs = [tmp_path / f"fig{figure}_{i}.csv" for i in (1, 2)]
        for out in outs:
            assert main(["reproduce", "--figure", str(figure),
                         "--config", PAPER_CFG, "-o", str(out)]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes(), \
            f"figure {figure} reruns differ"
