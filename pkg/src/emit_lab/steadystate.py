"""Pump-only steady state of the driven electromechanical device.

With the probe off, the intracavity photon number n_p obeys a cubic fixed
point equation: the mechanical modes shift the cavity by the static spring
term S * n_p with S = sum_k 2 g_k^2 / omega_k, so

    n_p * [ (kappa/2)^2 + (delta_pu - S n_p)^2 ] = (kappa_e/2) * E_pu^2.

Roots come from the closed-form real cubic solution, each polished by a few
Newton steps.  One root means a unique operating point; three mean optical
bistability and a caller-chosen branch policy.  Stability of a candidate
root is decided by the eigenvalues of the linearized drift matrix of the
coupled cavity-mechanics fluctuations.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .model import DeviceModel, DriveConfig, pump_amplitude

_RESIDUAL_TOL = 1e-10
_COLLAPSE_TOL = 1e-8
_STABILITY_TOL = 1e-9


class BistableError(RuntimeError):
    """Raised when a unique steady state was required but three roots exist."""


@dataclass(frozen=True)
class SteadyState:
    """One steady-state operating point.

    a_s is the re-phased (real, nonnegative) pump field amplitude, so
    a_s == sqrt(n_p) exactly; global_phase restores the physical complex
    amplitude via a_s * exp(1j * global_phase).  q_s holds the static
    dimensionless mechanical displacements 2 g_k n_p / omega_k and
    delta_eff the spring-shifted pump detuning delta_pu - sum_k g_k q_s_k.
    """

    n_p: float
    a_s: float
    global_phase: float
    q_s: tuple[float, ...]
    delta_eff: float
    branch: str
    stable: bool

    @property
    def amplitude(self) -> complex:
        """Physical complex steady amplitude."""
        return self.a_s * cmath.exp(1j * self.global_phase)


def spring_constant(model: DeviceModel) -> float:
    """Static spring coefficient S = sum_k 2 g_k^2 / omega_k (rad/s per photon)."""
    return sum(2.0 * m.g * m.g / m.omega_m for m in model.modes)


def _cubic_real_roots(a: float, b: float, c: float, d: float) -> list[float]:
    """All real roots of a x^3 + b x^2 + c x + d with a != 0 (closed form)."""
    b, c, d = b / a, c / a, d / a
    p = c - b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:
        s = math.sqrt(disc)
        u = math.copysign(abs(-q / 2.0 + s) ** (1.0 / 3.0), -q / 2.0 + s)
        v = math.copysign(abs(-q / 2.0 - s) ** (1.0 / 3.0), -q / 2.0 - s)
        return [u + v + shift]
    if p == 0.0:  # triple root
        return [shift] * 3
    # three real roots, trigonometric form
    r = math.sqrt(-p * p * p / 27.0)
    phi = math.acos(min(1.0, max(-1.0, -q / (2.0 * r))))
    m = 2.0 * math.sqrt(-p / 3.0)
    return [m * math.cos((phi + 2.0 * math.pi * k) / 3.0) + shift
            for k in range(3)]


def _polish(n: float, coeffs: tuple[float, float, float, float],
            scale: float) -> float:
    a, b, c, d = coeffs
    for _ in range(50):
        f = ((a * n + b) * n + c) * n + d
        if abs(f) <= 1e-14 * scale:
            break
        df = (3.0 * a * n + 2.0 * b) * n + c
        if df == 0.0:
            break
        step = f / df
        n -= step
        if abs(step) <= 1e-16 * max(1.0, abs(n)):
            break
    return n


def photon_number_roots(model: DeviceModel, drive: DriveConfig) -> list[float]:
    """All steady-state photon numbers, ascending.

    Returns one root away from bistability, three inside it (two at a fold,
    where nearly coincident roots are collapsed).  Every returned root n
    satisfies |cubic(n)| <= 1e-10 * max(1, (kappa_e/2) E_pu^2).
    """
    kappa = model.cavity.kappa
    kappa_e = model.cavity.kappa_e
    delta_pu = drive.pump_detuning
    e_pu = pump_amplitude(drive, model.cavity)
    rhs = 0.5 * kappa_e * e_pu * e_pu
    s = spring_constant(model)

    lorentz = (0.5 * kappa) ** 2 + delta_pu ** 2
    if rhs == 0.0:
        return [0.0]
    if s == 0.0:
        return [rhs / lorentz]

    coeffs = (s * s, -2.0 * delta_pu * s, lorentz, -rhs)
    scale = max(1.0, rhs)
    roots = [_polish(r, coeffs, scale) for r in _cubic_real_roots(*coeffs)]
    roots = sorted(r for r in roots if r >= 0.0)
    if not roots:
        # f(0) = -rhs < 0 with a positive leading coefficient, so a positive
        # root always exists; for rhs ~ 1e-33 Cardano's cancellation can
        # push it to a roundoff negative.  Rebuild from the linear response.
        roots = [_polish(rhs / lorentz, coeffs, scale)]

    collapsed: list[float] = []
    tol = _COLLAPSE_TOL * max(roots)
    for r in roots:
        if collapsed and r - collapsed[-1] <= tol:
            continue
        collapsed.append(r)

    a, b, c, d = coeffs
    for r in collapsed:
        resid = abs(((a * r + b) * r + c) * r + d)
        if resid > _RESIDUAL_TOL * scale:
            raise ArithmeticError(
                f"photon-number root residual {resid:.3e} exceeds tolerance")
    return collapsed


def drift_matrix(model: DeviceModel, drive: DriveConfig,
                 n_p: float) -> np.ndarray:
    """Linearized drift matrix about a candidate root (real, 2 + 2N square).

    Basis: cavity quadratures (x, y) of the fluctuation delta_a with the
    steady amplitude re-phased real, then (Q_k, V_k) per mechanical mode.
    """
    n = model.n_modes
    a_s = math.sqrt(max(n_p, 0.0))
    delta = drive.pump_detuning - spring_constant(model) * n_p
    kappa = model.cavity.kappa

    mat = np.zeros((2 + 2 * n, 2 + 2 * n))
    mat[0, 0] = -0.5 * kappa
    mat[0, 1] = delta
    mat[1, 0] = -delta
    mat[1, 1] = -0.5 * kappa
    for k, mode in enumerate(model.modes):
        iq = 2 + 2 * k
        iv = iq + 1
        mat[1, iq] = a_s * mode.g
        mat[iq, iv] = 1.0
        mat[iv, iq] = -mode.omega_m ** 2
        mat[iv, iv] = -mode.gamma
        mat[iv, 0] = 4.0 * mode.g * mode.omega_m * a_s
    return mat


def _stable(model: DeviceModel, drive: DriveConfig, n_p: float) -> bool:
    eigs = np.linalg.eigvals(drift_matrix(model, drive, n_p))
    return bool(np.max(eigs.real) < _STABILITY_TOL * model.cavity.kappa)


def classify_stability(model: DeviceModel, drive: DriveConfig,
                       candidate: "SteadyState | float") -> bool:
    """True when every drift-matrix eigenvalue has negative real part.

    Accepts a SteadyState or a bare photon number.  Marginality tolerance:
    real parts below 1e-9 * kappa count as negative.
    """
    n_p = candidate.n_p if isinstance(candidate, SteadyState) else float(candidate)
    return _stable(model, drive, n_p)


def _make_state(model: DeviceModel, drive: DriveConfig, n_p: float,
                branch: str) -> SteadyState:
    kappa = model.cavity.kappa
    s = spring_constant(model)
    delta_eff = drive.pump_detuning - s * n_p
    e_pu = pump_amplitude(drive, model.cavity)
    amp = math.sqrt(0.5 * model.cavity.kappa_e) * e_pu / (0.5 * kappa + 1j * delta_eff)
    phase = cmath.phase(amp) if amp != 0.0 else 0.0
    q_s = tuple(2.0 * m.g * n_p / m.omega_m for m in model.modes)
    return SteadyState(
        n_p=n_p,
        a_s=math.sqrt(max(n_p, 0.0)),
        global_phase=phase,
        q_s=q_s,
        delta_eff=delta_eff,
        branch=branch,
        stable=_stable(model, drive, n_p),
    )


_BRANCHES = {1: ("unique",), 2: ("lower", "upper"),
             3: ("lower", "middle", "upper")}


def solve_photon_number(model: DeviceModel,
                        drive: DriveConfig) -> list[SteadyState]:
    """All steady-state operating points, ascending in n_p, with stability."""
    roots = photon_number_roots(model, drive)
    labels = _BRANCHES[len(roots)]
    return [_make_state(model, drive, r, lab)
            for r, lab in zip(roots, labels)]


def steady_states(model: DeviceModel, drive: DriveConfig) -> list[SteadyState]:
    """Alias for solve_photon_number."""
    return solve_photon_number(model, drive)


def steady_state(model: DeviceModel, drive: DriveConfig,
                 root_policy: str = "require_unique") -> SteadyState:
    """Select one operating point.

    root_policy:
        ``require_unique``  raise BistableError unless exactly one root
        ``lowest``          low-photon branch
        ``highest``         high-photon branch
    """
    if root_policy not in ("require_unique", "lowest", "highest"):
        raise ValueError(f"unknown root_policy {root_policy!r}")
    states = steady_states(model, drive)
    if len(states) == 1:
        return states[0]
    if root_policy == "require_unique":
        raise BistableError("bistable operating point")
    return states[0] if root_policy == "lowest" else states[-1]
