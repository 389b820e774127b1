"""Device and drive records for a pump-probe electromechanical simulator.

The physical system is a single microwave cavity (total linewidth kappa,
external coupling kappa_e) parametrically coupled to N mechanical modes
(frequencies omega_k, damping rates gamma_k, single-photon couplings g_k).
A strong pump at omega_pu = omega_c - delta_pu and a weak probe offset by
Omega from the pump drive the cavity through the feedline.

Config files are flat ``key = value`` text with frequencies in ordinary Hz
and powers in W.  Everything stored on the records is angular (rad/s); the
``_hz`` suffix exists only at the file boundary.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

HBAR = 1.054571817e-34  # J s
TWO_PI = 2.0 * math.pi

_MODE_KEY = re.compile(r"^mode\.(\d+)\.(omega_hz|gamma_hz|g_hz)$")


class ConfigError(ValueError):
    """Malformed or physically inconsistent configuration input."""


@dataclass(frozen=True)
class CavityParams:
    """Microwave cavity: resonance, total and external linewidth (rad/s)."""

    omega_c: float
    kappa: float
    kappa_e: float

    def __post_init__(self):
        if not (self.omega_c > 0):
            raise ConfigError("cavity.omega_c_hz must be positive")
        if not (self.kappa > 0):
            raise ConfigError("cavity.kappa_hz must be positive")
        if not (0 < self.kappa_e <= self.kappa):
            raise ConfigError(
                "cavity.kappa_e_hz must lie in (0, cavity.kappa_hz]")

    @property
    def kappa_i(self) -> float:
        """Internal loss rate kappa - kappa_e."""
        return self.kappa - self.kappa_e

    @property
    def eta_c(self) -> float:
        """Coupling ratio kappa_e / kappa."""
        return self.kappa_e / self.kappa


@dataclass(frozen=True)
class MechanicalMode:
    """One mechanical oscillator coupled to the cavity.

    Parameters are angular (rad/s).  ``g`` is the single-photon
    electromechanical coupling; its sign is irrelevant because it only
    enters observables as g**2 or as products that cancel the sign.
    ``mass`` and ``x_zp`` are optional bookkeeping for when g was derived
    from a zero-point amplitude; nothing downstream reads them.
    """

    omega_m: float
    gamma: float
    g: float
    label: str = ""
    mass: float | None = None
    x_zp: float | None = None

    def __post_init__(self):
        if not (self.omega_m > 0):
            raise ConfigError(f"mode {self.label or '?'}: omega_hz must be positive")
        if not (self.gamma > 0):
            raise ConfigError(f"mode {self.label or '?'}: gamma_hz must be positive")


@dataclass(frozen=True)
class DeviceModel:
    """Cavity plus an ordered tuple of mechanical modes."""

    cavity: CavityParams
    modes: tuple[MechanicalMode, ...]

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ConfigError("N >= 1 required: at least one mechanical mode")
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ConfigError("mode labels must be unique")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def resolved_sideband(self) -> bool:
        """True when every mechanical frequency exceeds the cavity linewidth."""
        return all(m.omega_m > self.cavity.kappa for m in self.modes)


@dataclass(frozen=True)
class DriveConfig:
    """Pump and probe drive settings.

    pump_detuning is delta_pu = omega_c - omega_pu (rad/s, positive for a
    red-detuned pump).  probe_power only matters for the nonlinear
    time-domain runs; the linearized response is probe-power independent.
    """

    pump_power: float
    pump_detuning: float
    probe_power: float

    hbar = HBAR  # fixed physical constant, J s

    def __post_init__(self):
        if self.pump_power < 0:
            raise ConfigError("drive.pump_power_w must be nonnegative")
        if self.probe_power < 0:
            raise ConfigError("probe.power_w must be nonnegative")


def pump_amplitude(drive: DriveConfig, cavity: CavityParams) -> float:
    """Pump drive amplitude E_pu = sqrt(2 P / (hbar omega_pu)) in sqrt(rad/s).

    omega_pu = omega_c - pump_detuning must be positive, i.e. the stated
    detuning has to keep the pump at a physical (positive) frequency.
    """
    omega_pu = cavity.omega_c - drive.pump_detuning
    if omega_pu <= 0:
        raise ConfigError("pump frequency nonpositive")
    return math.sqrt(2.0 * drive.pump_power / (HBAR * omega_pu))


def probe_amplitude(drive: DriveConfig, cavity: CavityParams,
                    omega: float) -> float:
    """Probe amplitude at pump offset Omega: sqrt(2 P_pr / (hbar omega_pr))."""
    omega_pr = cavity.omega_c - drive.pump_detuning + omega
    if omega_pr <= 0:
        raise ConfigError("probe frequency omega_pu + Omega is nonpositive")
    return math.sqrt(2.0 * drive.probe_power / (HBAR * omega_pr))


# --- config file format ----------------------------------------------------

def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite")
    return value


def parse_kv(text: str) -> dict[str, str]:
    """Split flat ``key = value`` text into an ordered dict of raw strings.

    Blank lines and ``#`` comments are ignored.  Duplicate keys are an
    error; so is any line without ``=``.
    """
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        raw = raw.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"{key}: duplicate key")
        out[key] = raw
    return out


def build_records(kv: dict[str, str]) -> tuple[DeviceModel, DriveConfig]:
    """Assemble validated records from raw key/value strings.

    Unknown keys are rejected by name.  Mode indices must be contiguous
    from 1.  ``drive.pump_detuning_hz`` (numeric) and ``drive.pump_detuning``
    (symbolic: ``mean`` or ``mode<k>``) are mutually exclusive and one is
    required.  ``probe.power_w`` defaults to 1e-6 of the pump power.
    """
    kv = dict(kv)

    def take(key: str) -> str:
        if key not in kv:
            raise ConfigError(f"{key}: missing required key")
        return kv.pop(key)

    cavity = CavityParams(
        omega_c=TWO_PI * _parse_float("cavity.omega_c_hz", take("cavity.omega_c_hz")),
        kappa=TWO_PI * _parse_float("cavity.kappa_hz", take("cavity.kappa_hz")),
        kappa_e=TWO_PI * _parse_float("cavity.kappa_e_hz", take("cavity.kappa_e_hz")),
    )

    mode_fields: dict[int, dict[str, float]] = {}
    for key in list(kv):
        m = _MODE_KEY.match(key)
        if m is None:
            continue
        idx = int(m.group(1))
        mode_fields.setdefault(idx, {})[m.group(2)] = _parse_float(key, kv.pop(key))
    if not mode_fields:
        raise ConfigError("N >= 1 required: no mode.<k>.* keys present")
    n = max(mode_fields)
    if sorted(mode_fields) != list(range(1, n + 1)):
        raise ConfigError("mode indices must be contiguous starting at 1")
    modes = []
    for k in range(1, n + 1):
        fields = mode_fields[k]
        for name in ("omega_hz", "gamma_hz", "g_hz"):
            if name not in fields:
                raise ConfigError(f"mode.{k}.{name}: missing required key")
        modes.append(MechanicalMode(
            omega_m=TWO_PI * fields["omega_hz"],
            gamma=TWO_PI * fields["gamma_hz"],
            g=TWO_PI * fields["g_hz"],
            label=f"mode{k}",
        ))
    model = DeviceModel(cavity=cavity, modes=tuple(modes))

    pump_power = _parse_float("drive.pump_power_w", take("drive.pump_power_w"))

    has_numeric = "drive.pump_detuning_hz" in kv
    has_symbolic = "drive.pump_detuning" in kv
    if has_numeric and has_symbolic:
        raise ConfigError(
            "drive.pump_detuning_hz: mutually exclusive with drive.pump_detuning")
    if has_numeric:
        detuning = TWO_PI * _parse_float(
            "drive.pump_detuning_hz", kv.pop("drive.pump_detuning_hz"))
    elif has_symbolic:
        word = kv.pop("drive.pump_detuning")
        if word == "mean":
            detuning = sum(m.omega_m for m in modes) / len(modes)
        elif word.startswith("mode") and word[4:].isdigit() \
                and 1 <= int(word[4:]) <= len(modes):
            detuning = modes[int(word[4:]) - 1].omega_m
        else:
            raise ConfigError(
                f"drive.pump_detuning: expected 'mean' or 'mode<k>', got {word!r}")
    else:
        raise ConfigError("drive.pump_detuning_hz: missing required key "
                          "(or symbolic drive.pump_detuning)")

    if "probe.power_w" in kv:
        probe_power = _parse_float("probe.power_w", kv.pop("probe.power_w"))
    else:
        probe_power = pump_power * 1e-6

    if kv:
        stray = sorted(kv)[0]
        raise ConfigError(f"{stray}: unknown key")

    drive = DriveConfig(pump_power=pump_power, pump_detuning=detuning,
                        probe_power=probe_power)
    # fail early if the detuning is unphysical for this cavity
    try:
        pump_amplitude(drive, cavity)
    except ConfigError as exc:
        raise ConfigError(f"drive.pump_detuning_hz: {exc}") from None
    return model, drive


def parse_config(text: str) -> tuple[DeviceModel, DriveConfig]:
    """Parse flat config text into ``(DeviceModel, DriveConfig)``."""
    return build_records(parse_kv(text))


def _hz_repr(value: float) -> str:
    """Decimal Hz string whose reparse (times 2 pi) recovers ``value`` exactly.

    Plain value/2pi can land one ulp off after the round trip, so probe the
    neighboring doubles and keep the first that maps back bit-exactly.
    """
    center = value / TWO_PI
    candidates = [center]
    step = center
    for _ in range(2):
        step = math.nextafter(step, math.inf)
        candidates.append(step)
    step = center
    for _ in range(2):
        step = math.nextafter(step, -math.inf)
        candidates.append(step)
    for cand in candidates:
        if TWO_PI * cand == value:
            return repr(cand)
    return repr(center)


def serialize_config(model: DeviceModel, drive: DriveConfig) -> str:
    """Render records back to config text.

    Round trip is bit-exact: ``parse_config(serialize_config(*parse_config(t)))``
    reproduces every float field of the records unchanged.
    """
    lines = [
        f"cavity.omega_c_hz = {_hz_repr(model.cavity.omega_c)}",
        f"cavity.kappa_hz = {_hz_repr(model.cavity.kappa)}",
        f"cavity.kappa_e_hz = {_hz_repr(model.cavity.kappa_e)}",
    ]
    for k, mode in enumerate(model.modes, start=1):
        lines.append(f"mode.{k}.omega_hz = {_hz_repr(mode.omega_m)}")
        lines.append(f"mode.{k}.gamma_hz = {_hz_repr(mode.gamma)}")
        lines.append(f"mode.{k}.g_hz = {_hz_repr(mode.g)}")
    lines.append(f"drive.pump_power_w = {drive.pump_power!r}")
    lines.append(f"drive.pump_detuning_hz = {_hz_repr(drive.pump_detuning)}")
    lines.append(f"probe.power_w = {drive.probe_power!r}")
    return "\n".join(lines) + "\n"


def apply_overrides(kv: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Apply ``key=value`` override strings on top of parsed config pairs.

    An override may introduce a key that the file omitted (it still has to
    survive record validation).  The special value ``unset`` removes a key,
    which is how a numeric detuning gets swapped for a symbolic one.
    """
    out = dict(kv)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        raw = raw.strip()
        if not key:
            raise ConfigError(f"override {item!r}: empty key")
        if raw == "unset":
            out.pop(key, None)
        else:
            out[key] = raw
    return out


def paper_defaults() -> tuple[DeviceModel, DriveConfig]:
    """Reference aluminum-drum device used throughout the docs and tests.

    Two near-degenerate drums at 32.1 and 32.5 MHz on a 6.986 GHz cavity,
    pump red-detuned to the mean mechanical frequency at 1 uW.
    """
    cavity = CavityParams(
        omega_c=TWO_PI * 6.986e9,
        kappa=TWO_PI * 6.2e6,
        kappa_e=TWO_PI * 4.8e6,
    )
    modes = (
        MechanicalMode(omega_m=TWO_PI * 32.1e6, gamma=TWO_PI * 930.0,
                       g=TWO_PI * 39.0, label="mode1"),
        MechanicalMode(omega_m=TWO_PI * 32.5e6, gamma=TWO_PI * 930.0,
                       g=TWO_PI * 44.0, label="mode2"),
    )
    model = DeviceModel(cavity=cavity, modes=modes)
    drive = DriveConfig(
        pump_power=1e-6,
        pump_detuning=(modes[0].omega_m + modes[1].omega_m) / 2.0,
        probe_power=1e-12,
    )
    return model, drive


def with_drive(drive: DriveConfig, **changes) -> DriveConfig:
    """Functional update helper (records are frozen)."""
    return replace(drive, **changes)
