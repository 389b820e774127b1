"""Pump-probe response of a multimode circuit electromechanical device.

A strong microwave pump dresses a cavity coupled to several mechanical
modes; a weak probe then sees narrow transparency windows inside the
cavity absorption dip, one per mode, with steep dispersion and large
group delays.  The package solves the pump steady state (including
optical bistability), the linearized two-sideband probe response,
transparency window widths and delays across pump power, and validates
the linear solver against a nonlinear time-domain integration.
"""

from .analysis import (DelayRow, DelaySweep, WidthRow, WidthSweep,
                       WindowNotResolvedError, delay_vs_power,
                       find_transparency_peaks, width_vs_power, window_fwhm)
from .cli import RunSpec, main
from .model import (HBAR, CavityParams, ConfigError, DeviceModel, DriveConfig,
                    MechanicalMode, paper_defaults, parse_config,
                    probe_amplitude, pump_amplitude, serialize_config)
from .response import (ResponsePoint, SingularResponseError, cooperativity,
                       degenerate_linewidth, effective_linewidth,
                       group_delay_at, sideband_closed_form, sideband_general,
                       spectrum, spectrum_at, transmission)
from .steadystate import (BistableError, SteadyState, classify_stability,
                          solve_photon_number, spring_constant, steady_state,
                          steady_states)
from .timedomain import (CrosscheckReport, IntegrationDivergedError,
                         SidebandEstimate, TimeDomainTrace, crosscheck,
                         extract_sideband, integrate)

__version__ = "0.1.0"

__all__ = [
    "HBAR", "CavityParams", "MechanicalMode", "DeviceModel", "DriveConfig",
    "ConfigError", "parse_config", "serialize_config", "paper_defaults",
    "pump_amplitude", "probe_amplitude",
    "SteadyState", "BistableError", "steady_state", "steady_states",
    "solve_photon_number", "classify_stability", "spring_constant",
    "ResponsePoint", "SingularResponseError", "sideband_general",
    "sideband_closed_form", "transmission", "spectrum", "spectrum_at",
    "group_delay_at", "cooperativity", "effective_linewidth",
    "degenerate_linewidth",
    "TimeDomainTrace", "SidebandEstimate", "CrosscheckReport",
    "IntegrationDivergedError", "integrate", "extract_sideband", "crosscheck",
    "WidthRow", "WidthSweep", "DelayRow", "DelaySweep",
    "WindowNotResolvedError", "find_transparency_peaks", "window_fwhm",
    "width_vs_power", "delay_vs_power",
    "RunSpec", "main",
]
