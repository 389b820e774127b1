"""Command line front end.

Subcommands share one calling convention:

    emit-lab <subcommand> --config <path> [--set key=value]...
             [-o <path>] [--plot] [--root lowest|highest] ...

Everything is driven by the flat config file; --set overrides individual
keys after parsing and before validation.  Output is CSV with a leading
``#`` comment block holding the fully resolved parameters, written
atomically (temp file, then rename) so rerunning a command can never leave
a torn file.  Identical inputs produce byte-identical output: no
timestamps, no machine info, floats at 17 significant digits.

Exit codes: 0 success, 1 validation or usage failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from . import analysis, response, timedomain
from .model import (ConfigError, DeviceModel, DriveConfig, apply_overrides,
                    build_records, parse_kv, serialize_config)
from .steadystate import BistableError, steady_state, steady_states
from .timedomain import IntegrationDivergedError

TWO_PI = 2.0 * math.pi

_SPECTRUM_HEADER = ("omega_offset_hz, re_tp, im_tp, abs_tp, phase_t_rad, "
                    "tau_t_s, re_rp, im_rp, phase_r_rad, tau_r_s, fwm_mag")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunSpec:
    """One resolved invocation: subcommand plus every flag that shapes it."""

    subcommand: str
    config_path: str
    overrides: tuple[str, ...]
    output_path: str | None
    plot: bool
    root: str | None = None
    grid: str | None = None
    figure: int | None = None
    dump_trace: str | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunSpec":
        return cls(subcommand=args.subcommand, config_path=args.config,
                   overrides=tuple(args.overrides),
                   output_path=args.output, plot=args.plot,
                   root=getattr(args, "root", None),
                   grid=getattr(args, "grid", None),
                   figure=getattr(args, "figure", None),
                   dump_trace=getattr(args, "dump_trace", None))


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's 2
        raise UsageError(message)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _row(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def _parse_grid(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--grid expects start_hz:stop_hz:points, got {text!r}")
    try:
        start, stop = float(parts[0]), float(parts[1])
        points = int(parts[2])
    except ValueError:
        raise UsageError(f"--grid expects numbers, got {text!r}") from None
    if points < 1:
        raise UsageError("--grid needs at least one point")
    if stop < start:
        raise UsageError("--grid stop must not precede start")
    return start, stop, points


def _build_parser() -> _Parser:
    parser = _Parser(prog="emit-lab", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, root=True):
        p.add_argument("--config", required=True)
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")
        p.add_argument("-o", "--output", default=None)
        p.add_argument("--plot", action="store_true")
        if root:
            p.add_argument("--root", choices=("lowest", "highest"),
                           default=None)

    common(sub.add_parser("steady-state"))
    p = sub.add_parser("spectrum")
    common(p)
    p.add_argument("--grid", default=None, metavar="START_HZ:STOP_HZ:POINTS")
    common(sub.add_parser("sweep-width"))
    common(sub.add_parser("sweep-delay"))
    p = sub.add_parser("validate-td")
    common(p)
    p.add_argument("--dump-trace", default=None, metavar="PATH")
    p = sub.add_parser("reproduce")
    common(p)
    p.add_argument("--figure", type=int, required=True, choices=(2, 3, 4, 5))
    return parser


def _load(spec: RunSpec) -> tuple[DeviceModel, DriveConfig]:
    try:
        with open(spec.config_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    kv = apply_overrides(parse_kv(text), list(spec.overrides))
    return build_records(kv)


def _root_policy(spec: RunSpec) -> str:
    return spec.root if spec.root else "require_unique"


def _comment_block(spec, model, drive, extra=()):
    lines = [f"# emit-lab {spec.subcommand}"]
    for item in extra:
        lines.append(f"# {item}")
    for line in serialize_config(model, drive).splitlines():
        lines.append(f"# {line}")
    return lines


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _svg_plot(series, xlabel: str, ylabel: str) -> str:
    """Minimal deterministic SVG line plot.

    series: list of (label, xs, ys).  NaNs break the polyline.
    """
    width, height = 640, 400
    ml, mr, mt, mb = 70, 20, 20, 45
    xs_all = [x for _, xs, _ in series for x in xs if math.isfinite(x)]
    ys_all = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    if not xs_all or not ys_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
           f'y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
           f'stroke="black"/>']
    for i, (label, xs, ys) in enumerate(series):
        color = colors[i % len(colors)]
        chunk = []
        chunks = [chunk]
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                chunk.append(f"{px(x):.2f},{py(y):.2f}")
            elif chunk:
                chunk = []
                chunks.append(chunk)
        for ch in chunks:
            if len(ch) > 1:
                out.append(f'<polyline fill="none" stroke="{color}" '
                           f'stroke-width="1.5" points="{" ".join(ch)}"/>')
        if label:
            out.append(f'<text x="{width - mr - 5}" y="{mt + 16 + 16 * i}" '
                       f'text-anchor="end" font-size="12" fill="{color}">'
                       f'{label}</text>')
    out.append(f'<text x="{(ml + width - mr) / 2:.0f}" y="{height - 8}" '
               f'text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(f'<text x="14" y="{(mt + height - mb) / 2:.0f}" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 14 '
               f'{(mt + height - mb) / 2:.0f})">{ylabel}</text>')
    for val, anchor in ((x0, "start"), (x1, "end")):
        out.append(f'<text x="{px(val):.0f}" y="{height - mb + 16}" '
                   f'text-anchor="{anchor}" font-size="10">{val:.6g}</text>')
    for val in (y0, y1):
        out.append(f'<text x="{ml - 4}" y="{py(val):.0f}" text-anchor="end" '
                   f'font-size="10">{val:.6g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _maybe_plot(spec, series, xlabel, ylabel) -> None:
    if not spec.plot:
        return
    if spec.output_path is None:
        raise UsageError("--plot requires -o/--output")
    stem, _ = os.path.splitext(spec.output_path)
    _write_text(stem + ".svg", _svg_plot(series, xlabel, ylabel))


# --- subcommands ------------------------------------------------------------

def _cmd_steady_state(spec, model, drive) -> None:
    states = steady_states(model, drive)
    if len(states) > 1 and spec.root is None:
        raise BistableError("bistable operating point")
    n = model.n_modes
    header = ["n_p", "re_a_s"] + [f"q_s_{k + 1}" for k in range(n)] \
        + ["delta_eff_hz", "stable"]
    lines = _comment_block(spec, model, drive,
                           extra=[f"root_policy = {_root_policy(spec)}"])
    lines.append(", ".join(header))
    for st in states:
        lines.append(_row([st.n_p, st.a_s, *st.q_s,
                           st.delta_eff / TWO_PI, st.stable]))
    _write_text(spec.output_path, "\n".join(lines) + "\n")
    _maybe_plot(spec, [("n_p", [float(k) for k in range(len(states))],
                        [st.n_p for st in states])], "root index", "n_p")


def _default_offsets(model) -> np.ndarray:
    kappa_hz = model.cavity.kappa / TWO_PI
    top = max(m.omega_m for m in model.modes) - model.modes[0].omega_m
    return np.linspace(-kappa_hz, top / TWO_PI + kappa_hz, 2001)


def _spectrum_lines(spec, model, drive, offsets_hz) -> tuple[list[str], list]:
    omega1 = model.modes[0].omega_m
    grid = omega1 + TWO_PI * np.asarray(offsets_hz)
    points = response.spectrum(model, drive, grid,
                               root_policy=_root_policy(spec))
    lines = [_SPECTRUM_HEADER]
    for off, p in zip(offsets_hz, points):
        lines.append(_row([off, p.t_p.real, p.t_p.imag, abs(p.t_p),
                           p.phase_t, p.tau_t, p.r_p.real, p.r_p.imag,
                           p.phase_r, p.tau_r, p.fwm_mag]))
    return lines, points


def _cmd_spectrum(spec, model, drive) -> None:
    if spec.grid is not None:
        start, stop, npts = _parse_grid(spec.grid)
        offsets = np.linspace(start, stop, npts)
        gridnote = f"grid_hz = {start!r}:{stop!r}:{npts}"
    else:
        offsets = _default_offsets(model)
        gridnote = "grid_hz = default"
    body, points = _spectrum_lines(spec, model, drive, offsets)
    lines = _comment_block(spec, model, drive,
                           extra=[f"root_policy = {_root_policy(spec)}",
                                  gridnote])
    lines.extend(body)
    _write_text(spec.output_path, "\n".join(lines) + "\n")
    _maybe_plot(spec, [("|t_p|", list(offsets),
                        [abs(p.t_p) for p in points])],
                "probe offset from mode 1 (Hz)", "|t_p|")


_WIDTH_POWERS = np.linspace(1e-7, 1.5e-6, 15)


def _width_sweep_out(spec, model, drive, notes) -> None:
    sweep = analysis.width_vs_power(model, drive, _WIDTH_POWERS,
                                    root_policy=_root_policy(spec))
    n = model.n_modes
    extra = list(notes) + [
        f"fit_slope_s_per_w = {_fmt(sweep.slope)}",
        f"fit_intercept_rad_s = {_fmt(sweep.intercept)}",
        f"fit_r_squared = {_fmt(sweep.r_squared)}"]
    lines = _comment_block(spec, model, drive, extra=extra)
    header = ["power_w", "n_p"] + [f"c_{k + 1}" for k in range(n)] \
        + ["peak_omega_rad_s", "fwhm_rad_s", "status"]
    lines.append(", ".join(header))
    for r in sweep.rows:
        coop = r.coop if r.coop else (math.nan,) * n
        lines.append(_row([r.power, r.n_p, *coop, r.peak_omega, r.fwhm,
                           "ok" if r.error is None else r.error]))
    _write_text(spec.output_path, "\n".join(lines) + "\n")
    good = [r for r in sweep.rows if r.error is None]
    _maybe_plot(spec, [("fwhm_rad_s", [r.power for r in good],
                        [r.fwhm for r in good])],
                "pump power (W)", "window FWHM (rad/s)")


def _cmd_sweep_width(spec, model, drive) -> None:
    _width_sweep_out(spec, model, drive,
                     [f"root_policy = {_root_policy(spec)}"])


_DELAY_POWERS = np.logspace(-9, math.log10(2e-6), 60)


def _cmd_sweep_delay(spec, model, drive) -> None:
    sweep = analysis.delay_vs_power(model, drive, _DELAY_POWERS,
                                    root_policy=_root_policy(spec))
    n = model.n_modes
    extra = [f"root_policy = {_root_policy(spec)}",
             f"max_tau_t_s = {_fmt(sweep.best_tau_t[1])} "
             f"at power_w = {_fmt(sweep.best_tau_t[0])}",
             f"min_tau_r_s = {_fmt(sweep.best_tau_r[1])} "
             f"at power_w = {_fmt(sweep.best_tau_r[0])}"]
    lines = _comment_block(spec, model, drive, extra=extra)
    header = ["power_w", "n_p"] + [f"c_{k + 1}" for k in range(n)] \
        + ["tau_t_s", "tau_r_s"]
    lines.append(", ".join(header))
    for r in sweep.rows:
        lines.append(_row([r.power, r.n_p, *r.coop, r.tau_t, r.tau_r]))
    _write_text(spec.output_path, "\n".join(lines) + "\n")
    logs = [math.log10(r.power) for r in sweep.rows]
    _maybe_plot(spec, [("tau_t_s", logs, [r.tau_t for r in sweep.rows]),
                       ("tau_r_s", logs, [r.tau_r for r in sweep.rows])],
                "log10 pump power (W)", "group delay (s)")


def _cmd_validate_td(spec, model, drive) -> None:
    freqs = [m.omega_m for m in model.modes]
    offsets = sorted(set(freqs))
    if len(freqs) > 1:
        mean = sum(freqs) / len(freqs)
        if all(abs(mean - f) > 1e-9 * mean for f in offsets):
            offsets.append(mean)
        offsets.sort()
    lines = _comment_block(spec, model, drive,
                           extra=[f"root_policy = {_root_policy(spec)}",
                                  "probe_ratio = 0.001"])
    lines.append("omega_hz, rel_err_aplus, rel_err_aminus, "
                 "linearity_defect, residual_harmonics")
    reports = []
    for omega in offsets:
        rep = timedomain.crosscheck(model, drive, omega,
                                    root_policy=_root_policy(spec))
        reports.append(rep)
        lines.append(_row([omega / TWO_PI, rep.rel_err_aplus,
                           rep.rel_err_aminus, rep.linearity_defect,
                           rep.residual_harmonics]))
    _write_text(spec.output_path, "\n".join(lines) + "\n")

    if spec.dump_trace is not None:
        steady = steady_state(model, drive, root_policy=_root_policy(spec))
        omega = offsets[0]
        omega_pu = model.cavity.omega_c - drive.pump_detuning
        omega_pr = omega_pu + omega
        probe_power = drive.pump_power * 1e-6 * (omega_pr / omega_pu)
        run_drive = replace(drive, probe_power=probe_power)
        gamma_min = min(response.effective_linewidth(model, steady, k)
                        for k in range(model.n_modes))
        horizon = 14.0 / gamma_min + 8.0 * TWO_PI / omega
        trace = timedomain.integrate(model, run_drive, omega, horizon,
                                     root_policy=_root_policy(spec))
        n = model.n_modes
        tlines = _comment_block(spec, model, run_drive,
                                extra=[f"trace_omega_hz = {_fmt(omega / TWO_PI)}"])
        header = ["t_s", "re_a", "im_a"] + [f"q_{k + 1}" for k in range(n)]
        tlines.append(", ".join(header))
        times = trace.times
        for j in range(len(times)):
            tlines.append(_row([times[j], trace.a_samples[j].real,
                                trace.a_samples[j].imag,
                                *trace.q_samples[:, j]]))
        _write_text(spec.dump_trace, "\n".join(tlines) + "\n")

    _maybe_plot(spec, [("rel_err_aplus", [o / TWO_PI for o in offsets],
                        [r.rel_err_aplus for r in reports])],
                "probe offset (Hz)", "relative error")


def _cmd_reproduce(spec, model, drive) -> None:
    fig = spec.figure
    if fig == 2:
        m1 = model.modes[0]
        modes = [m1] + [replace(m, omega_m=m1.omega_m, gamma=m1.gamma, g=m1.g)
                        for m in model.modes[1:]]
        model = replace(model, modes=tuple(modes))
        drive = replace(drive, pump_detuning=m1.omega_m, pump_power=4e-6)
        offsets = np.linspace(-2.5e6, 2.5e6, 2001)
        body, points = _spectrum_lines(spec, model, drive, offsets)
        lines = _comment_block(spec, model, drive,
                               extra=["preset = figure 2 (degenerate modes, "
                                      "pump at mode 1, 4 uW)"])
        lines.extend(body)
        _write_text(spec.output_path, "\n".join(lines) + "\n")
        _maybe_plot(spec, [("|t_p|", list(offsets),
                            [abs(p.t_p) for p in points])],
                    "probe offset from mode 1 (Hz)", "|t_p|")
    elif fig == 3:
        mean = sum(m.omega_m for m in model.modes) / model.n_modes
        drive = replace(drive, pump_detuning=mean, pump_power=1e-6)
        offsets = np.linspace(-0.2e6, 0.6e6, 3201)
        body, points = _spectrum_lines(spec, model, drive, offsets)
        lines = _comment_block(spec, model, drive,
                               extra=["preset = figure 3 (pump at mean "
                                      "mechanical frequency, 1 uW)"])
        lines.extend(body)
        _write_text(spec.output_path, "\n".join(lines) + "\n")
        _maybe_plot(spec, [("|t_p|", list(offsets),
                            [abs(p.t_p) for p in points])],
                    "probe offset from mode 1 (Hz)", "|t_p|")
    elif fig == 4:
        mean = sum(m.omega_m for m in model.modes) / model.n_modes
        drive = replace(drive, pump_detuning=mean)
        _width_sweep_out(spec, model, drive,
                         ["preset = figure 4 (window width against pump "
                          "power, 0.1 to 1.5 uW)"])
    else:  # fig == 5
        mean = sum(m.omega_m for m in model.modes) / model.n_modes
        drive = replace(drive, pump_detuning=mean)
        base = analysis.delay_vs_power(model, drive, _DELAY_POWERS,
                                       root_policy=_root_policy(spec))
        half_model = replace(model, modes=tuple(
            replace(m, gamma=0.5 * m.gamma) for m in model.modes))
        halved = analysis.delay_vs_power(half_model, drive, _DELAY_POWERS,
                                         root_policy=_root_policy(spec))
        extra = ["preset = figure 5 (delays at the mode 1 window, "
                 "full and halved mechanical damping)",
                 f"max_tau_t_s = {_fmt(base.best_tau_t[1])} "
                 f"at power_w = {_fmt(base.best_tau_t[0])}",
                 f"min_tau_r_s = {_fmt(base.best_tau_r[1])} "
                 f"at power_w = {_fmt(base.best_tau_r[0])}",
                 f"half_gamma_max_tau_t_s = {_fmt(halved.best_tau_t[1])}",
                 f"half_gamma_min_tau_r_s = {_fmt(halved.best_tau_r[1])}"]
        lines = _comment_block(spec, model, drive, extra=extra)
        lines.append("power_w, tau_t_s, tau_r_s, "
                     "tau_t_half_gamma_s, tau_r_half_gamma_s")
        for rb, rh in zip(base.rows, halved.rows):
            lines.append(_row([rb.power, rb.tau_t, rb.tau_r,
                               rh.tau_t, rh.tau_r]))
        _write_text(spec.output_path, "\n".join(lines) + "\n")
        logs = [math.log10(r.power) for r in base.rows]
        _maybe_plot(spec, [("tau_t_s", logs, [r.tau_t for r in base.rows]),
                           ("tau_r_s", logs, [r.tau_r for r in base.rows])],
                    "log10 pump power (W)", "group delay (s)")


_DISPATCH = {
    "steady-state": _cmd_steady_state,
    "spectrum": _cmd_spectrum,
    "sweep-width": _cmd_sweep_width,
    "sweep-delay": _cmd_sweep_delay,
    "validate-td": _cmd_validate_td,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        spec = RunSpec.from_args(parser.parse_args(argv))
        model, drive = _load(spec)
        _DISPATCH[spec.subcommand](spec, model, drive)
    except UsageError as exc:
        print(f"emit-lab: error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, BistableError, ValueError) as exc:
        print(f"emit-lab: error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationDivergedError, analysis.WindowNotResolvedError,
            ArithmeticError) as exc:
        print(f"emit-lab: numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def entrypoint() -> None:
    sys.exit(main())
