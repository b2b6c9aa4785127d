"""Calibration formulas for the two-ion trap and the Raman force beams.

All frequencies are angular (rad/s), lengths in metres, masses in kilograms.
Configuration files use cyclic units; conversion happens in
:mod:`spinforge.config`.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ContractViolationError, PerturbativeRegimeError, SingularInputError

logger = logging.getLogger(__name__)

# CODATA 2018, pinned
HBAR = 1.054571817e-34
EPSILON_0 = 8.8541878128e-12
ELEMENTARY_CHARGE = 1.602176634e-19
ATOMIC_MASS_UNIT = 1.66053907e-27
CA40_MASS_U = 39.962591
CA40_MASS = CA40_MASS_U * ATOMIC_MASS_UNIT
DEFAULT_WAVELENGTH = 397.0e-9

PERTURBATIVE_MARGIN = 10.0
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class TrapConfig:
    """Trap, beam and atomic parameters in SI/angular units."""

    omega_c: float
    Omega_c: float
    omega_0: float
    theta_L: float
    theta_A: float
    beta: float
    ion_mass: float = CA40_MASS
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        for name in ("omega_c", "Omega_c", "omega_0", "ion_mass", "wavelength"):
            if not getattr(self, name) > 0:
                raise ContractViolationError(f"TrapConfig.{name} must be positive")
        for name in ("theta_L", "theta_A", "beta"):
            if not 0.0 < getattr(self, name) < np.pi:
                raise ContractViolationError(f"TrapConfig.{name} must lie in (0, pi)")


@dataclass(frozen=True)
class ForcePulseParams:
    """One spin-dependent force pulse: strength, detuning, light shift and duration."""

    Omega_f: float
    delta: float
    Delta_c: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.delta == 0:
            raise SingularInputError("force detuning delta must be non-zero")
        if self.tau < 0:
            raise ContractViolationError("force pulse duration must be non-negative")

    @property
    def loop_period(self) -> float:
        return loop_period(self.delta)

    def with_tau(self, tau: float) -> "ForcePulseParams":
        return ForcePulseParams(self.Omega_f, self.delta, self.Delta_c, tau)


@dataclass(frozen=True)
class DerivedGeometry:
    delta_k: float
    omega_c: float
    omega_s: float
    z0s: float
    eta: float
    d: float
    p_real: float
    delta_phi: float
    Omega_s: float
    Omega_f: float

    def to_dict(self) -> dict:
        return asdict(self)


def delta_k(wavelength: float, theta_L: float) -> float:
    """Wavevector difference of two beams crossing at ``theta_L``."""
    if not 0.0 <= theta_L <= np.pi:
        raise ContractViolationError("theta_L must lie in [0, pi]")
    return 4.0 * np.pi * np.sin(0.5 * theta_L) / wavelength


def mode_frequencies(omega_c: float) -> Tuple[float, float]:
    """Axial (COM, stretch) frequencies of a two-ion crystal."""
    if omega_c <= 0:
        raise ContractViolationError("omega_c must be positive")
    return omega_c, np.sqrt(3.0) * omega_c


def ground_state_size(ion_mass: float, omega_s: float) -> float:
    """Stretch-mode ground-state extent z0s = sqrt(hbar / (4 M omega_s))."""
    if ion_mass <= 0 or omega_s <= 0:
        raise ContractViolationError("ion mass and omega_s must be positive")
    return np.sqrt(HBAR / (4.0 * ion_mass * omega_s))


def lamb_dicke(dk: float, z0s: float) -> float:
    return dk * z0s


def ion_separation(ion_mass: float, omega_c: float) -> float:
    """Equilibrium separation of two singly charged ions in a harmonic axial well."""
    if ion_mass <= 0 or omega_c <= 0:
        raise ContractViolationError("ion mass and omega_c must be positive")
    q2 = ELEMENTARY_CHARGE**2
    return (q2 / (2.0 * np.pi * EPSILON_0 * ion_mass * omega_c**2)) ** (1.0 / 3.0)


def standing_wave_integer(dk: float, d: float) -> float:
    """Number of standing-wave periods between the ions (caller checks integrality)."""
    return dk * d / (2.0 * np.pi)


def force_phase_angle(theta_A: float, beta: float) -> float:
    """Δφ = 2 atan(1 / (cos θ_A tan β)), on the principal branch (0, π)."""
    tan_beta = np.tan(beta)
    if abs(tan_beta) < SINGULAR_TOL:
        raise SingularInputError("beta = 0 leaves the force phase undefined")
    for name, angle in (("theta_A", theta_A), ("beta", beta)):
        if not 0.0 < angle < 0.5 * np.pi:
            raise ContractViolationError(f"{name}={angle:.6g} outside (0, pi/2); the force phase leaves (0, pi)")
    return 2.0 * np.arctan(1.0 / (np.cos(theta_A) * tan_beta))


def polarization_angle(theta_A: float, delta_phi: float) -> float:
    """Inverse of :func:`force_phase_angle` for β."""
    t = np.tan(0.5 * delta_phi)
    if abs(t) < SINGULAR_TOL:
        raise SingularInputError("delta_phi = 0 requires beta = pi/2")
    return float(np.arctan(1.0 / (np.cos(theta_A) * t)))


def sigma_rabi(Omega_c: float, theta_A: float, delta_phi: float) -> float:
    """σ-polarized Rabi frequency Ω_s = Ω_c cot θ_A / cos(Δφ/2)."""
    half = np.cos(0.5 * delta_phi)
    if abs(half) < SINGULAR_TOL:
        raise SingularInputError("delta_phi = pi makes Omega_s singular")
    return Omega_c / np.tan(theta_A) / half


def force_rabi(eta: float, Omega_s: float, delta_phi: float) -> float:
    return 2.0 * eta * Omega_s * np.sin(0.5 * delta_phi)


def force_phase_from_rabi(Omega_f: float, eta: float, Omega_c: float, theta_A: float) -> float:
    """Invert Ω_f = 2ηΩ_c cot θ_A tan(Δφ/2) for Δφ at fixed geometry."""
    scale = 2.0 * eta * Omega_c / np.tan(theta_A)
    if abs(scale) < SINGULAR_TOL:
        raise SingularInputError("geometry gives no differential force")
    return float(2.0 * np.arctan(Omega_f / scale))


def carrier_light_shift(Omega_c: float, omega_0: float, omega: float) -> float:
    """Carrier a.c. Stark splitting Δ_c = (Ω_c²/2)[1/(ω_0+ω) + 1/(ω_0−ω)].

    Valid only while both ω_0 ± ω exceed ten carrier Rabi frequencies.
    """
    bound = PERTURBATIVE_MARGIN * Omega_c
    if abs(omega_0 - omega) <= bound or abs(omega_0 + omega) <= bound:
        raise PerturbativeRegimeError(
            f"|omega_0 ± omega| must exceed {PERTURBATIVE_MARGIN:g}·Omega_c for the light-shift formula"
        )
    return 0.5 * Omega_c**2 * (1.0 / (omega_0 + omega) + 1.0 / (omega_0 - omega))


def gate_phase(Omega_f: float, delta: float) -> float:
    if delta == 0:
        raise SingularInputError("gate phase undefined at zero detuning")
    return 0.5 * np.pi * (Omega_f / delta) ** 2


def loop_period(delta: float) -> float:
    if delta == 0:
        raise SingularInputError("loop period undefined at zero detuning")
    return 2.0 * np.pi / abs(delta)


def displacement_trajectory(Omega_f: float, delta: float, tau) -> Tuple[complex, float]:
    """Branch displacement α(τ) and geometric phase Φ(τ) of a driven stretch mode.

    α(τ) = (Ω_f/2δ)(1 − e^{iδτ}) and Φ(τ) = (Ω_f/2δ)²(δτ − sin δτ).  ``tau``
    may be an array, in which case both outputs are arrays.
    """
    if delta == 0:
        raise SingularInputError("displacement undefined at zero detuning")
    ratio = Omega_f / (2.0 * delta)
    x = delta * np.asarray(tau, dtype=float)
    alpha = ratio * (1.0 - np.exp(1j * x))
    phase = ratio**2 * (x - np.sin(x))
    if np.ndim(alpha) == 0:
        return complex(alpha), float(phase)
    return alpha, phase


def derive_geometry(config: TrapConfig, delta_phi: Optional[float] = None) -> DerivedGeometry:
    """Run the full calibration chain for ``config``.

    ``delta_phi`` overrides the polarization-derived force phase, e.g. with a
    fitted value.
    """
    dk = delta_k(config.wavelength, config.theta_L)
    omega_c, omega_s = mode_frequencies(config.omega_c)
    z0s = ground_state_size(config.ion_mass, omega_s)
    eta = lamb_dicke(dk, z0s)
    d = ion_separation(config.ion_mass, omega_c)
    if delta_phi is None:
        delta_phi = force_phase_angle(config.theta_A, config.beta)
    omega_sig = sigma_rabi(config.Omega_c, config.theta_A, delta_phi)
    geometry = DerivedGeometry(
        delta_k=dk,
        omega_c=omega_c,
        omega_s=omega_s,
        z0s=z0s,
        eta=eta,
        d=d,
        p_real=standing_wave_integer(dk, d),
        delta_phi=delta_phi,
        Omega_s=omega_sig,
        Omega_f=force_rabi(eta, omega_sig, delta_phi),
    )
    logger.debug(f"Derived geometry: eta={eta:.4f}, p={geometry.p_real:.3f}")
    return geometry
