"""Run configuration: unit-suffixed on-disk settings and their runtime conversions.

Files use cyclic frequencies (Hz), microseconds, degrees and multiples of π;
the converters return the SI/angular types used by the simulation modules.
"""

import json
import logging
import os
from typing import List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, SpinforgeError
from .gate_sim import SimOptions
from .measurement_model import ReadoutModel, pulse_area_from_duration, uniform_phi_grid
from .trap_physics import (
    ATOMIC_MASS_UNIT,
    CA40_MASS_U,
    DerivedGeometry,
    ForcePulseParams,
    TrapConfig,
    carrier_light_shift,
    derive_geometry,
    force_phase_angle,
    loop_period,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
CONFIG_SUFFIXES = (".json", ".yaml", ".yml")


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrapSettings(_Settings):
    """Trap, beam geometry and ion species."""

    omega_c_hz: float = Field(..., gt=0, description="COM axial frequency ω_c/2π")
    carrier_rabi_hz: float = Field(100e3, gt=0, description="Carrier Rabi frequency Ω_c/2π")
    omega_0_hz: float = Field(4.8e6, gt=0, description="Qubit Zeeman splitting ω_0/2π")
    theta_l_deg: float = Field(58.9, gt=0, lt=180, description="Angle between the force beams")
    theta_a_deg: float = Field(62.0, gt=0, lt=180, description="Beam angle to the magnetic field")
    beta_deg: float = Field(64.2, gt=0, lt=180, description="Polarization angle of the force beams")
    mass_amu: float = Field(CA40_MASS_U, gt=0, description="Ion mass in atomic mass units")
    wavelength_nm: float = Field(397.0, gt=0, description="Force-beam wavelength")

    def to_trap_config(self) -> TrapConfig:
        return TrapConfig(
            omega_c=TWO_PI * self.omega_c_hz,
            Omega_c=TWO_PI * self.carrier_rabi_hz,
            omega_0=TWO_PI * self.omega_0_hz,
            theta_L=np.deg2rad(self.theta_l_deg),
            theta_A=np.deg2rad(self.theta_a_deg),
            beta=np.deg2rad(self.beta_deg),
            ion_mass=self.mass_amu * ATOMIC_MASS_UNIT,
            wavelength=self.wavelength_nm * 1e-9,
        )


class ForceSettings(_Settings):
    """Spin-dependent force pulse; unset values are derived from the trap."""

    delta_hz: float = Field(..., description="Force detuning δ/2π from the stretch mode")
    omega_f_hz: Optional[float] = Field(
        None, ge=0, description="Force Rabi frequency Ω_f/2π; derived from geometry when unset"
    )
    delta_c_hz: Optional[float] = Field(
        None, description="Carrier light shift Δ_c/2π; derived from the beam detuning when unset"
    )
    delta_phi_rad: Optional[float] = Field(
        None, description="Force phase Δφ; derived from theta_a and beta when unset"
    )
    tau_us: Optional[float] = Field(
        None, ge=0, description="Force pulse duration; loop closure 2π/δ when unset"
    )

    @model_validator(mode="after")
    def _nonzero_detuning(self):
        if self.delta_hz == 0:
            raise ValueError("delta_hz must be non-zero")
        return self


class SimSettings(_Settings):
    sequence: Literal["single_w", "double_w"] = Field("double_w", description="Echo variant")
    mode: Literal["analytic", "fock"] = Field("analytic", description="Motional treatment")
    fock_dim: int = Field(40, ge=2, description="Fock truncation in fock mode")
    nbar: float = Field(0.0, ge=0, description="Thermal occupancy of the stretch mode")
    gamma_per_ms: float = Field(0.0, ge=0, description="Qubit dephasing rate Γ in 1/ms")
    include_thermal_coherence_factor: bool = Field(
        False, description="Scale |α|² by (2n̄+1) in the population model"
    )
    steps_per_period: int = Field(1000, ge=200, description="RK4 steps per drive period")

    def to_sim_options(self) -> SimOptions:
        return SimOptions(
            mode=self.mode,
            fock_dim=self.fock_dim,
            nbar=self.nbar,
            gamma=self.gamma_per_ms * 1e3,
            include_thermal_coherence_factor=self.include_thermal_coherence_factor,
            steps_per_period=self.steps_per_period,
        )


class ReadoutSettings(_Settings):
    p_prep: float = Field(0.99, ge=0, le=1, description="Per-qubit preparation fidelity")
    eps_bright: float = Field(0.05, ge=0, le=0.5, description="P(read dark | bright)")
    eps_dark: float = Field(0.05, ge=0, le=0.5, description="P(read bright | dark)")
    correct: bool = Field(True, description="Undo readout errors before analysis")

    def to_readout_model(self) -> ReadoutModel:
        return ReadoutModel(p_prep=self.p_prep, eps_bright=self.eps_bright, eps_dark=self.eps_dark)


class ScanSettings(_Settings):
    kind: Literal["phi", "tau"] = Field("phi", description="Swept quantity")
    thetas_pi: List[float] = Field(
        default_factory=lambda: [0.54, 0.66], description="Analysis pulse areas in units of π"
    )
    pulse_durations_us: Optional[List[float]] = Field(
        None, description="Analysis pulse durations; overrides thetas_pi when set"
    )
    dead_time_us: float = Field(0.1, ge=0, description="Pulse dead time subtracted from durations")
    phi_points: int = Field(36, ge=1, description="Analysis phases evenly covering [0, 2π)")
    tau_max_us: float = Field(240.0, gt=0, description="Largest force duration in a tau scan")
    tau_points: int = Field(61, ge=2, description="Number of durations in a tau scan")
    shots: int = Field(500, ge=1, description="Repetitions per scan point")
    seed: int = Field(0, ge=0, description="Root seed for shot sampling")
    exact: bool = Field(False, description="Store exact probabilities instead of sampling")


class OutputSettings(_Settings):
    directory: str = Field("out", description="Output directory")
    format: Literal["json", "csv"] = Field("csv", description="Scan file format")


class RunConfig(_Settings):
    name: str = Field("run", description="Label used in output file names")
    trap: TrapSettings
    force: ForceSettings
    sim: SimSettings = Field(default_factory=SimSettings)
    readout: ReadoutSettings = Field(default_factory=ReadoutSettings)
    scan: ScanSettings = Field(default_factory=ScanSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    def trap_config(self) -> TrapConfig:
        return self.trap.to_trap_config()

    def geometry(self) -> DerivedGeometry:
        return derive_geometry(self.trap_config(), self.force.delta_phi_rad)

    def force_params(self) -> ForcePulseParams:
        """Angular force parameters, filling unset values from the calibration chain."""
        trap = self.trap_config()
        delta = TWO_PI * self.force.delta_hz
        if self.force.omega_f_hz is not None:
            omega_f = TWO_PI * self.force.omega_f_hz
        else:
            omega_f = self.geometry().Omega_f
        if self.force.delta_c_hz is not None:
            delta_c = TWO_PI * self.force.delta_c_hz
        else:
            omega_s = np.sqrt(3.0) * trap.omega_c
            delta_c = carrier_light_shift(trap.Omega_c, trap.omega_0, omega_s + delta)
        tau = self.force.tau_us * 1e-6 if self.force.tau_us is not None else loop_period(delta)
        return ForcePulseParams(Omega_f=omega_f, delta=delta, Delta_c=delta_c, tau=tau)

    def sim_options(self) -> SimOptions:
        return self.sim.to_sim_options()

    def readout_model(self) -> ReadoutModel:
        return self.readout.to_readout_model()

    def analysis_thetas(self) -> List[float]:
        if self.scan.pulse_durations_us is None:
            return [np.pi * t for t in self.scan.thetas_pi]
        omega_c = TWO_PI * self.trap.carrier_rabi_hz
        dead = self.scan.dead_time_us * 1e-6
        return [pulse_area_from_duration(omega_c, t * 1e-6, dead) for t in self.scan.pulse_durations_us]

    def phi_list(self) -> np.ndarray:
        return uniform_phi_grid(self.scan.phi_points)

    def tau_list(self) -> np.ndarray:
        return np.linspace(0.0, self.scan.tau_max_us * 1e-6, self.scan.tau_points)

    def initial_guess(self) -> dict:
        """Population-model starting point from the configured force and dephasing."""
        params = self.force_params()
        return {
            "gamma": self.sim_options().gamma,
            "delta": abs(params.delta),
            "Omega_f": params.Omega_f,
            "Delta_c": abs(params.Delta_c),
        }


def validate_run_config(data: dict) -> List[str]:
    """Return one diagnostic line per failing field; empty when ``data`` is valid."""
    try:
        RunConfig.model_validate(data)
    except ValidationError as exc:
        return [
            f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}"
            for err in exc.errors()
        ]
    return []


def parse_config(data: dict, source: str = "<dict>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: configuration must be a mapping", [f"<root>: got {type(data).__name__}"])
    diagnostics = validate_run_config(data)
    if diagnostics:
        for line in diagnostics:
            logger.error(f"{source}: {line}")
        raise ConfigError(f"{source}: configuration failed validation", diagnostics)
    config = RunConfig.model_validate(data)
    try:
        trap = config.trap_config()
        force_phase_angle(trap.theta_A, trap.beta)
    except SpinforgeError as exc:
        raise ConfigError(f"{source}: {exc}", [str(exc)]) from exc
    return config


def read_config_file(path: str) -> dict:
    suffix = os.path.splitext(path)[1].lower()
    if suffix not in CONFIG_SUFFIXES:
        raise ConfigError(f"unsupported config format {suffix!r}", [f"expected one of {CONFIG_SUFFIXES}"])
    try:
        with open(path, "r", encoding="utf-8") as f:
            if suffix == ".json":
                return json.load(f)
            return yaml.safe_load(f) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", [str(exc)]) from exc
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"could not parse {path}", [str(exc)]) from exc


def load_config(path: str) -> RunConfig:
    config = parse_config(read_config_file(path), source=path)
    logger.info(f"Loaded config {config.name!r} from {path}")
    return config
