"""Shared fixtures: reference devices and an independent photon-number oracle."""

import math
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from emit_lab.model import (DeviceModel, DriveConfig, build_records,
                            paper_defaults, parse_kv, pump_amplitude)
from emit_lab.steadystate import spring_constant

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

REPO = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO / "configs"


@pytest.fixture(scope="session")
def paper():
    """Published two-mode device with its standard drive."""
    return paper_defaults()


@pytest.fixture(scope="session")
def paper_model(paper):
    return paper[0]


@pytest.fixture(scope="session")
def paper_drive(paper):
    return paper[1]


@pytest.fixture(scope="session")
def scaled():
    """Slow device for time-domain work, loaded from the shipped config."""
    text = (CONFIG_DIR / "scaled_oracle.cfg").read_text(encoding="utf-8")
    return build_records(parse_kv(text))


def bisect_photon_roots(model: DeviceModel, drive: DriveConfig,
                        n_scan: int = 20000) -> list[float]:
    """Photon-number roots by sign-change scan plus bisection.

    Deliberately knows nothing about cubics: brackets every sign change of
    f(n) = n ((kappa/2)^2 + (Delta - S n)^2) - rhs on [0, n_max] and bisects
    each to near machine precision.  n_max = rhs / (kappa/2)^2 bounds all
    roots because the bracket factor never drops below (kappa/2)^2.
    """
    kappa = model.cavity.kappa
    e_pu = pump_amplitude(drive, model.cavity)
    rhs = 0.5 * model.cavity.kappa_e * e_pu ** 2
    if rhs == 0.0:
        return [0.0]
    s = spring_constant(model)
    delta = drive.pump_detuning
    half_k2 = (0.5 * kappa) ** 2

    def f(n: float) -> float:
        d = delta - s * n
        return n * (half_k2 + d * d) - rhs

    n_max = rhs / half_k2
    xs = [n_max * i / n_scan for i in range(n_scan + 1)]
    roots = []
    for a, b in zip(xs, xs[1:]):
        fa, fb = f(a), f(b)
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb > 0.0:
            continue
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            if f(a) * f(mid) <= 0.0:
                b = mid
            else:
                a = mid
        roots.append(0.5 * (a + b))
    if f(n_max) == 0.0:
        roots.append(n_max)
    # drop near-duplicates from tangent grazes
    out = []
    for r in sorted(roots):
        if not out or r - out[-1] > 1e-9 * max(1.0, n_max):
            out.append(r)
    return out


def mean_detuned(model: DeviceModel, drive: DriveConfig) -> DriveConfig:
    from dataclasses import replace
    mean = sum(m.omega_m for m in model.modes) / model.n_modes
    return replace(drive, pump_detuning=mean)


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def approx_log(x: float, y: float, tol: float) -> bool:
    return abs(math.log(x / y)) <= math.log1p(tol)
