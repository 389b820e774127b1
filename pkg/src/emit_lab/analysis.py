"""Feature extraction on probe spectra: transparency windows and delay sweeps.

A transparency window is a narrow local maximum of |t_p| riding inside the
wide cavity absorption dip.  Its full width at half maximum is measured on
the power curve |t_p|^2 relative to the local dip floor, not the global
baseline; a Lorentzian least-squares fit (seeded by the geometric half-max
crossings) keeps the estimate tied to the window's curvature even when the
window is broad enough that the cavity envelope skews the flanks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit

from .model import DeviceModel, DriveConfig
from .response import (cooperativity, effective_linewidth, group_delay_at,
                       spectrum_at)
from .steadystate import steady_state


class WindowNotResolvedError(RuntimeError):
    """The requested transparency window cannot be measured on this grid."""


def _quadratic_vertex(x0, x1, x2, y0, y1, y2):
    """Vertex of the parabola through three points; falls back to the middle."""
    d1 = (y0 - y1) * (x2 - x1)
    d2 = (y2 - y1) * (x1 - x0)
    denom = d1 + d2
    if denom == 0.0:
        return x1, y1
    xv = x1 + 0.5 * (d1 * (x2 - x1) - d2 * (x1 - x0)) / denom
    # evaluate the same parabola at the vertex (Lagrange form)
    yv = (y0 * (xv - x1) * (xv - x2) / ((x0 - x1) * (x0 - x2))
          + y1 * (xv - x0) * (xv - x2) / ((x1 - x0) * (x1 - x2))
          + y2 * (xv - x0) * (xv - x1) / ((x2 - x0) * (x2 - x1)))
    return xv, yv


def find_transparency_peaks(points) -> list[tuple[float, float]]:
    """Local maxima of |t_p| over a spectrum, refined by 3-point parabolas.

    Returns (omega, height) pairs in ascending omega.  Grid endpoints do
    not count as peaks; plateaus (exact ties) are skipped.
    """
    x = np.array([p.omega for p in points])
    y = np.array([abs(p.t_p) for p in points])
    peaks = []
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] > y[i + 1]:
            xv, yv = _quadratic_vertex(x[i - 1], x[i], x[i + 1],
                                       y[i - 1], y[i], y[i + 1])
            peaks.append((float(xv), float(yv)))
    return peaks


def _walk_to_floor(y: np.ndarray, start: int, direction: int) -> tuple[int, bool]:
    """Follow a descending flank to its local minimum.

    Returns (index, resolved); resolved is False when the grid edge was hit
    while still descending, i.e. the floor lies outside the grid.
    """
    i = start
    while 0 < i < len(y) - 1 if direction < 0 else i < len(y) - 1:
        j = i + direction
        if y[j] <= y[i]:
            i = j
            if i == 0 or i == len(y) - 1:
                return i, False
        else:
            return i, True
    return i, False


def _lorentzian(x, base, height, hwhm, center):
    return base + height * hwhm ** 2 / (hwhm ** 2 + (x - center) ** 2)


def window_fwhm(points, peak_omega: float) -> float:
    """FWHM (rad/s) of the transparency window nearest peak_omega.

    Measured on |t_p|^2 between the adjacent dip floors with the larger
    floor as local baseline.  The geometric half-max crossings seed a
    Lorentzian least-squares fit over the whole flank-to-flank segment;
    the fitted width is returned (geometric width if the fit misbehaves).
    Raises WindowNotResolvedError when the window has no measurable
    height or its floors fall outside the grid.
    """
    x = np.array([p.omega for p in points])
    y = np.array([abs(p.t_p) ** 2 for p in points])
    if len(x) < 5:
        raise WindowNotResolvedError("window not resolved")

    i = int(np.argmin(np.abs(x - peak_omega)))
    # settle onto the local maximum in case peak_omega sits between samples
    while 0 < i < len(y) - 1 and (y[i + 1] > y[i] or y[i - 1] > y[i]):
        i += 1 if y[i + 1] > y[i - 1] else -1
        if i == 0 or i == len(y) - 1:
            raise WindowNotResolvedError("window not resolved")

    left, ok_l = _walk_to_floor(y, i, -1)
    right, ok_r = _walk_to_floor(y, i, +1)
    if not (ok_l and ok_r) or left == i or right == i:
        raise WindowNotResolvedError("window not resolved")

    base = max(y[left], y[right])
    height = y[i] - base
    if height <= 0.0:
        raise WindowNotResolvedError("window not resolved")
    half = base + 0.5 * height

    def cross(lo: int, hi: int, step: int) -> float:
        j = lo
        while j != hi and y[j + step] > half:
            j += step
        y0, y1 = y[j], y[j + step]
        frac = (half - y0) / (y1 - y0)
        return float(x[j] + frac * (x[j + step] - x[j]))

    x_left = cross(i, left, -1)
    x_right = cross(i, right, +1)
    hwhm0 = 0.5 * (x_right - x_left)
    center0, _ = _quadratic_vertex(x[i - 1], x[i], x[i + 1],
                                   y[i - 1], y[i], y[i + 1])

    seg = slice(left, right + 1)
    try:
        popt, _ = curve_fit(_lorentzian, x[seg], y[seg],
                            p0=(base, height, hwhm0, center0), maxfev=20000)
        hwhm = abs(popt[2])
    except (RuntimeError, ValueError, TypeError):
        hwhm = hwhm0
    if not (0.2 * hwhm0 <= hwhm <= 5.0 * hwhm0):
        hwhm = hwhm0
    return 2.0 * hwhm


def window_grid(model: DeviceModel, gamma_eff: float, center: float,
                ) -> np.ndarray:
    """Probe-offset grid for measuring one window.

    Extends max(10 gamma_eff, 1.2 x largest mode gap) on each side of the
    window so the dip floors stay inside the grid even when the envelope
    is much wider than the window, sampled at gamma_eff / 40.
    """
    freqs = [m.omega_m for m in model.modes]
    gap = max(freqs) - min(freqs)
    span = max(10.0 * gamma_eff, 1.2 * gap)
    step = gamma_eff / 40.0
    n = int(math.ceil(span / step))
    return center + step * np.arange(-n, n + 1)


@dataclass(frozen=True)
class WidthRow:
    power: float
    n_p: float
    coop: tuple[float, ...]
    peak_omega: float
    fwhm: float
    error: str | None = None


@dataclass(frozen=True)
class WidthSweep:
    rows: tuple[WidthRow, ...]
    slope: float
    intercept: float
    r_squared: float

    @property
    def axis(self) -> tuple[float, ...]:
        return tuple(r.power for r in self.rows)


def _check_axis(powers) -> np.ndarray:
    powers = np.asarray(list(powers), dtype=float)
    if len(powers) == 0:
        raise ValueError("degenerate power axis: no sweep points")
    if len(powers) > 1 and not np.all(np.diff(powers) > 0.0):
        raise ValueError("degenerate power axis: values must be strictly increasing")
    return powers


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line: (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def width_vs_power(model: DeviceModel, drive: DriveConfig, powers,
                   mode_index: int = 0,
                   root_policy: str = "require_unique") -> WidthSweep:
    """Transparency window width of one mode across pump powers.

    Each power gets its own steady state and measurement grid.  Rows where
    the window cannot be measured carry an error string and are excluded
    from the linear fit of width against power.
    """
    powers = _check_axis(powers)
    rows = []
    target = model.modes[mode_index].omega_m
    for power in powers:
        drive_p = replace(drive, pump_power=float(power))
        try:
            steady = steady_state(model, drive_p, root_policy=root_policy)
            gamma_eff = effective_linewidth(model, steady, mode_index)
            grid = window_grid(model, gamma_eff, target)
            points = spectrum_at(model, steady, grid, with_delays=False)
            peaks = find_transparency_peaks(points)
            if not peaks:
                raise WindowNotResolvedError("window not resolved")
            peak_omega = min(peaks, key=lambda p: abs(p[0] - target))[0]
            fwhm = window_fwhm(points, peak_omega)
            coop = tuple(cooperativity(model, steady, k)
                         for k in range(model.n_modes))
            rows.append(WidthRow(power=float(power), n_p=steady.n_p,
                                 coop=coop, peak_omega=peak_omega, fwhm=fwhm))
        except (WindowNotResolvedError, RuntimeError, ArithmeticError) as exc:
            rows.append(WidthRow(power=float(power), n_p=math.nan, coop=(),
                                 peak_omega=math.nan, fwhm=math.nan,
                                 error=str(exc)))
    good = [r for r in rows if r.error is None]
    slope, intercept, r2 = linear_fit([r.power for r in good],
                                      [r.fwhm for r in good])
    return WidthSweep(rows=tuple(rows), slope=slope, intercept=intercept,
                      r_squared=r2)


@dataclass(frozen=True)
class DelayRow:
    power: float
    n_p: float
    coop: tuple[float, ...]
    tau_t: float
    tau_r: float


@dataclass(frozen=True)
class DelaySweep:
    rows: tuple[DelayRow, ...]
    best_tau_t: tuple[float, float]   # (power, value) maximizing tau_t
    best_tau_r: tuple[float, float]   # (power, value) minimizing tau_r

    @property
    def axis(self) -> tuple[float, ...]:
        return tuple(r.power for r in self.rows)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, a: float, b: float, iters: int = 60) -> tuple[float, float]:
    """Golden-section maximum of f on [a, b]."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    xm = 0.5 * (a + b)
    return xm, f(xm)


def delay_vs_power(model: DeviceModel, drive: DriveConfig, powers,
                   omega: float | None = None,
                   root_policy: str = "require_unique") -> DelaySweep:
    """Group delays at a fixed probe offset across pump powers.

    omega defaults to the first mode's window center.  The grid extrema of
    tau_t (largest) and tau_r (smallest) are refined by golden-section
    search in log power between the neighboring grid points.
    """
    if omega is None:
        omega = model.modes[0].omega_m
    powers = _check_axis(powers)
    rows = []
    for power in powers:
        drive_p = replace(drive, pump_power=float(power))
        steady = steady_state(model, drive_p, root_policy=root_policy)
        tau_t, tau_r = group_delay_at(model, steady, omega)
        coop = tuple(cooperativity(model, steady, k)
                     for k in range(model.n_modes))
        rows.append(DelayRow(power=float(power), n_p=steady.n_p, coop=coop,
                             tau_t=tau_t, tau_r=tau_r))

    def tau_at(log_p: float, which: int, sign: float) -> float:
        drive_p = replace(drive, pump_power=10.0 ** log_p)
        steady = steady_state(model, drive_p, root_policy=root_policy)
        taus = group_delay_at(model, steady, omega)
        return sign * taus[which]

    def refine(values, which: int, sign: float) -> tuple[float, float]:
        i = int(np.argmax(sign * np.asarray(values)))
        lo = powers[max(0, i - 1)]
        hi = powers[min(len(powers) - 1, i + 1)]
        if lo == hi:
            return float(powers[i]), float(values[i])
        log_best, best = _golden_max(lambda lp: tau_at(lp, which, sign),
                                     math.log10(lo), math.log10(hi))
        return 10.0 ** log_best, sign * best

    best_t = refine([r.tau_t for r in rows], 0, +1.0)
    best_r = refine([r.tau_r for r in rows], 1, -1.0)
    return DelaySweep(rows=tuple(rows), best_tau_t=best_t, best_tau_r=best_r)
