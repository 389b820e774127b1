"""Linearized probe response about a pump-dressed steady state.

The probe, offset by Omega from the pump, drives correlated upper and lower
intracavity sidebands (u, v) = (a_plus, conj(a_minus)) through the pump
enhanced electromechanical interaction:

    A u = i Lam (u + v) + sqrt(kappa_e/2),   A = kappa/2 + i (delta - Omega)
    B v = -i Lam (u + v),                    B = kappa/2 - i (delta + Omega)

with delta the spring-shifted pump detuning and the mechanically mediated
coupling Lam(Omega) = 2 n_p sum_k (g_k^2/omega_k) eta_k, where eta_k is the
normalized oscillator susceptibility omega_k^2/(omega_k^2 - i gamma_k Omega
- Omega^2).  Everything here is normalized to unit probe amplitude, which is
exact for the linearized problem.

Probe transmission past the hanger-coupled cavity is
t_p = 1 - sqrt(kappa_e/2) a_plus and the rerouted part is r_p = 1 - t_p.
Group delays are phase slopes of t_p and r_p against Omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DeviceModel, DriveConfig
from .steadystate import SteadyState, spring_constant, steady_state

_PHASE_FLOOR = 1e-12


class SingularResponseError(ArithmeticError):
    """Response undefined at this probe offset (vanishing denominator or signal)."""


@dataclass(frozen=True)
class ResponseCoefficients:
    """Per-offset coefficients of the eliminated sideband solution.

    alpha_k = g_k^2/omega_k^2, eta_k the normalized susceptibilities,
    lam = 2 n_p sum_k alpha_k omega_k eta_k, beta = lam^2 and
    theta = 2i n_p sum_k alpha_k omega_k (eta_k + 1); delta is the probe
    offset these were evaluated at.
    """

    delta: float
    alpha: tuple[float, ...]
    eta: tuple[complex, ...]
    lam: complex
    beta: complex
    theta: complex


@dataclass(frozen=True)
class ResponsePoint:
    """Probe response at a single offset Omega (rad/s above the pump)."""

    omega: float
    a_plus: complex
    a_minus: complex
    q_plus: tuple[complex, ...]
    t_p: complex
    r_p: complex
    phase_t: float
    phase_r: float
    tau_t: float
    tau_r: float
    fwm_mag: float


def eta(mode, omega):
    """Normalized mechanical susceptibility, eta(0) = 1.

    Accepts scalar or ndarray omega.
    """
    w2 = mode.omega_m * mode.omega_m
    return w2 / (w2 - 1j * mode.gamma * omega - omega * omega)


def coupling(model: DeviceModel, steady: SteadyState, omega):
    """Pump-enhanced mechanical coupling Lam(Omega), scalar or elementwise."""
    return 2.0 * steady.n_p * sum(
        (m.g * m.g / m.omega_m) * eta(m, omega) for m in model.modes)


def coefficients(model: DeviceModel, steady: SteadyState,
                 omega: float) -> ResponseCoefficients:
    """All closed-form coefficients at one probe offset."""
    lam = complex(coupling(model, steady, omega))
    theta = 2j * steady.n_p * sum(
        (m.g * m.g / m.omega_m) * (eta(m, omega) + 1.0) for m in model.modes)
    return ResponseCoefficients(
        delta=omega,
        alpha=tuple(m.g * m.g / (m.omega_m * m.omega_m) for m in model.modes),
        eta=tuple(complex(eta(m, omega)) for m in model.modes),
        lam=lam,
        beta=lam * lam,
        theta=complex(theta),
    )


def _uv(model: DeviceModel, steady: SteadyState, omega):
    """Sideband pair (u, v) for unit probe amplitude; vectorized over omega.

    v = -i Lam u / (B + i Lam) with the (B + i Lam) factor of u cancelled
    analytically, so nothing blows up where that factor vanishes.
    """
    kappa = model.cavity.kappa
    delta = steady.delta_eff
    lam = coupling(model, steady, omega)
    a = 0.5 * kappa + 1j * (delta - omega)
    b = 0.5 * kappa - 1j * (delta + omega)
    denom = a * b - 2.0 * lam * delta
    force = math.sqrt(0.5 * model.cavity.kappa_e)
    u = force * (b + 1j * lam) / denom
    v = -1j * lam * force / denom
    return u, v


def sideband_general(model: DeviceModel, steady: SteadyState,
                     omega: float) -> tuple[complex, complex, tuple[complex, ...]]:
    """Reference solve of the full linear system at one offset.

    Returns (a_plus, a_minus, q_plus) with a_minus = conj(v) the lower
    sideband amplitude and q_plus the mechanical sideband amplitudes
    (2 g_k a_s / omega_k) eta_k (u + v).
    """
    u, v = _uv(model, steady, omega)
    u = complex(u)
    v = complex(v)
    if not (np.isfinite(u) and np.isfinite(v)):
        raise SingularResponseError("singular response point")
    w = u + v
    q_plus = tuple((2.0 * m.g * steady.a_s / m.omega_m) * eta(m, omega) * w
                   for m in model.modes)
    return u, v.conjugate(), q_plus


def sideband_closed_form(model: DeviceModel, steady: SteadyState,
                         omega) -> complex:
    """Upper sideband a_plus from the eliminated closed form.

    Algebraically identical to sideband_general: with alpha_k = g_k^2 /
    omega_k^2, beta = Lam^2 and theta = 2i n_p sum_k alpha_k omega_k
    (eta_k + 1),

        a_plus = sqrt(kappa_e/2) (kappa/2 - i Omega - i delta_pu + theta)
                 / [ (kappa/2 - i Omega)^2 + (delta_pu + i theta)^2 - beta ].

    Accepts scalar or ndarray omega.
    """
    kappa = model.cavity.kappa
    delta_pu = steady.delta_eff + spring_constant(model) * steady.n_p
    lam = coupling(model, steady, omega)
    beta = lam * lam
    theta = 2j * steady.n_p * sum(
        (m.g * m.g / m.omega_m) * (eta(m, omega) + 1.0) for m in model.modes)
    core = 0.5 * kappa - 1j * omega
    numer = core - 1j * delta_pu + theta
    denom = core * core + (delta_pu + 1j * theta) ** 2 - beta
    out = math.sqrt(0.5 * model.cavity.kappa_e) * numer / denom
    if not np.all(np.isfinite(out)):
        raise SingularResponseError("singular response point")
    return out


def _tp_grid(model: DeviceModel, steady: SteadyState, omega):
    root = math.sqrt(0.5 * model.cavity.kappa_e)
    u, v = _uv(model, steady, omega)
    t_p = 1.0 - root * u
    return u, v, t_p


def transmission(model: DeviceModel, steady: SteadyState,
                 omega: float) -> ResponsePoint:
    """Full response record at one offset, group delays left as nan."""
    a_plus, a_minus, q_plus = sideband_general(model, steady, omega)
    root = math.sqrt(0.5 * model.cavity.kappa_e)
    t_p = 1.0 - root * a_plus
    r_p = 1.0 - t_p
    return ResponsePoint(
        omega=omega,
        a_plus=a_plus,
        a_minus=a_minus,
        q_plus=q_plus,
        t_p=t_p,
        r_p=r_p,
        phase_t=math.atan2(t_p.imag, t_p.real),
        phase_r=math.atan2(r_p.imag, r_p.real),
        tau_t=math.nan,
        tau_r=math.nan,
        fwm_mag=root * abs(a_minus),
    )


def _wrap(phi):
    """Wrap phase difference(s) into (-pi, pi]."""
    return phi - 2.0 * math.pi * np.round(phi / (2.0 * math.pi))


def default_delay_step(model: DeviceModel) -> float:
    """Central-difference step for phase slopes: narrowest bare linewidth / 100."""
    return min(m.gamma for m in model.modes) / 100.0


def _delays(model: DeviceModel, steady: SteadyState, omega, step: float):
    """Vectorized (tau_t, tau_r) by 3-point central difference.

    Successive phase differences are wrapped into (-pi, pi] before summing,
    which unwraps the 3-sample stencil as long as the phase moves less than
    pi per half step.
    """
    omega = np.asarray(omega, dtype=float)
    grids = [omega - step, omega, omega + step]
    tps = []
    rps = []
    for g in grids:
        _, _, t_p = _tp_grid(model, steady, g)
        tps.append(t_p)
        rps.append(1.0 - t_p)
    taus = []
    for vals in (tps, rps):
        mags = [np.abs(v) for v in vals]
        if any(np.any(m < _PHASE_FLOOR) for m in mags):
            raise SingularResponseError("phase undefined near transmission zero")
        p0, p1, p2 = (np.angle(v) for v in vals)
        total = _wrap(p1 - p0) + _wrap(p2 - p1)
        taus.append(total / (2.0 * step))
    return taus[0], taus[1]


def group_delay_at(model: DeviceModel, steady: SteadyState, omega: float,
                   step: float | None = None) -> tuple[float, float]:
    """Group delays (tau_t, tau_r) in seconds at one probe offset.

    Positive tau_t means the transmitted probe envelope is delayed.  Raises
    SingularResponseError where t_p (or r_p) vanishes and the phase slope
    stops being meaningful.
    """
    if step is None:
        step = default_delay_step(model)
    tau_t, tau_r = _delays(model, steady, omega, step)
    return float(tau_t), float(tau_r)


def _points_from_arrays(model, omega, u, v, tau_t, tau_r):
    root = math.sqrt(0.5 * model.cavity.kappa_e)
    pts = []
    for i in range(len(omega)):
        a_plus = complex(u[i])
        a_minus = complex(v[i]).conjugate()
        t_p = 1.0 - root * a_plus
        r_p = 1.0 - t_p
        pts.append((a_plus, a_minus, t_p, r_p,
                    math.nan if tau_t is None else float(tau_t[i]),
                    math.nan if tau_r is None else float(tau_r[i])))
    return pts


def spectrum(model: DeviceModel, drive: DriveConfig, omega_grid,
             root_policy: str = "require_unique",
             step: float | None = None,
             with_delays: bool = True) -> list[ResponsePoint]:
    """Response at every grid offset, solving the steady state exactly once.

    omega_grid is an array of probe offsets (rad/s above the pump).  Group
    delays use the default stencil step unless overridden.
    """
    steady = steady_state(model, drive, root_policy=root_policy)
    return spectrum_at(model, steady, omega_grid, step=step,
                       with_delays=with_delays)


def spectrum_at(model: DeviceModel, steady: SteadyState, omega_grid,
                step: float | None = None,
                with_delays: bool = True) -> list[ResponsePoint]:
    """Same as spectrum() for an already-solved steady state."""
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or omega.size == 0:
        raise ValueError("omega_grid must be a nonempty 1-d array")
    if omega.size > 1 and not np.all(np.diff(omega) > 0.0):
        raise ValueError("omega_grid must be strictly increasing")
    u, v = _uv(model, steady, omega)
    if not np.all(np.isfinite(u)):
        raise SingularResponseError("singular response point")
    if with_delays:
        if step is None:
            step = default_delay_step(model)
        tau_t, tau_r = _delays(model, steady, omega, step)
    else:
        tau_t = tau_r = None
    raw = _points_from_arrays(model, omega, u, v, tau_t, tau_r)
    points = []
    for i, (a_plus, a_minus, t_p, r_p, tt, tr) in enumerate(raw):
        w = a_plus + complex(v[i])
        q_plus = tuple((2.0 * m.g * steady.a_s / m.omega_m) * eta(m, omega[i]) * w
                       for m in model.modes)
        points.append(ResponsePoint(
            omega=float(omega[i]),
            a_plus=a_plus,
            a_minus=a_minus,
            q_plus=q_plus,
            t_p=t_p,
            r_p=r_p,
            phase_t=math.atan2(t_p.imag, t_p.real),
            phase_r=math.atan2(r_p.imag, r_p.real),
            tau_t=tt,
            tau_r=tr,
            fwm_mag=math.sqrt(0.5 * model.cavity.kappa_e) * abs(a_minus),
        ))
    return points


def cooperativity(model: DeviceModel, steady: SteadyState, k: int) -> float:
    """C_k = 4 g_k^2 n_p / (kappa gamma_k) for mode index k (0-based)."""
    m = model.modes[k]
    return 4.0 * m.g * m.g * steady.n_p / (model.cavity.kappa * m.gamma)


def effective_linewidth(model: DeviceModel, steady: SteadyState,
                        k: int) -> float:
    """Broadened mechanical linewidth gamma_k (1 + C_k), rad/s."""
    return model.modes[k].gamma * (1.0 + cooperativity(model, steady, k))


def degenerate_linewidth(model: DeviceModel, steady: SteadyState) -> float:
    """Width of the single window formed by exactly degenerate modes.

    When all modes share omega_m and gamma they hybridize into one bright
    combination whose cooperativities add: gamma_1 (1 + sum_k C_k).  Raises
    if the modes are not degenerate to 1e-6 relative.
    """
    ref = model.modes[0]
    for m in model.modes[1:]:
        if abs(m.omega_m - ref.omega_m) > 1e-6 * ref.omega_m \
                or abs(m.gamma - ref.gamma) > 1e-6 * ref.gamma:
            raise ValueError("modes are not degenerate")
    c_sum = sum(cooperativity(model, steady, k) for k in range(model.n_modes))
    return ref.gamma * (1.0 + c_sum)
