import os
import sys

# Ensure project root is on sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from spinforge.errors import ContractViolationError, PerturbativeRegimeError, SingularInputError
from spinforge.trap_physics import (
    CA40_MASS,
    ForcePulseParams,
    TrapConfig,
    carrier_light_shift,
    delta_k,
    derive_geometry,
    displacement_trajectory,
    force_phase_angle,
    force_phase_from_rabi,
    force_rabi,
    gate_phase,
    ground_state_size,
    ion_separation,
    lamb_dicke,
    loop_period,
    mode_frequencies,
    polarization_angle,
    sigma_rabi,
    standing_wave_integer,
)

TWO_PI = 2 * np.pi


def trap(omega_c_hz=500e3):
    return TrapConfig(
        omega_c=TWO_PI * omega_c_hz,
        Omega_c=TWO_PI * 100e3,
        omega_0=TWO_PI * 4.8e6,
        theta_L=np.deg2rad(58.9),
        theta_A=np.deg2rad(62.0),
        beta=np.deg2rad(64.2),
    )


def test_delta_k_for_crossed_beams():
    dk = delta_k(397e-9, np.deg2rad(58.9))
    assert dk == pytest.approx(1.5564e7, rel=1e-3)
    assert delta_k(397e-9, 0.0) == 0.0


def test_stretch_mode_and_ground_state_size():
    omega_c, omega_s = mode_frequencies(TWO_PI * 500e3)
    assert omega_s / omega_c == pytest.approx(np.sqrt(3))
    assert ground_state_size(CA40_MASS, omega_s) == pytest.approx(8.5448e-9, rel=1e-3)


@pytest.mark.parametrize("omega_c_hz,eta,p", [(500e3, 0.133, 22.0), (536.5e3, 0.128, 21.0)])
def test_lamb_dicke_and_standing_wave(omega_c_hz, eta, p):
    geometry = derive_geometry(trap(omega_c_hz))
    assert geometry.eta == pytest.approx(eta, abs=0.002), "Lamb-Dicke parameter off"
    assert geometry.p_real == pytest.approx(p, abs=0.2), "Standing-wave integer off"


def test_ion_separation_config_a():
    assert ion_separation(CA40_MASS, TWO_PI * 500e3) == pytest.approx(8.899e-6, rel=1e-3)


def test_lamb_dicke_is_product():
    assert lamb_dicke(2.0, 3.0) == 6.0


def test_force_phase_roundtrip():
    theta_a = np.deg2rad(62.0)
    dphi = force_phase_angle(theta_a, np.deg2rad(64.2))
    assert dphi == pytest.approx(1.6, abs=0.01)
    assert polarization_angle(theta_a, dphi) == pytest.approx(np.deg2rad(64.2))


def test_force_phase_singular_at_zero_beta():
    with pytest.raises(SingularInputError):
        force_phase_angle(np.deg2rad(62.0), 0.0)
    with pytest.raises(SingularInputError):
        sigma_rabi(1.0, np.deg2rad(62.0), np.pi)


def test_force_phase_rejects_angles_past_quarter_turn():
    with pytest.raises(ContractViolationError):
        force_phase_angle(0.3, 0.6 * np.pi)
    with pytest.raises(ContractViolationError):
        force_phase_angle(0.6 * np.pi, 0.3)
    config = TrapConfig(TWO_PI * 500e3, TWO_PI * 100e3, TWO_PI * 4.8e6, np.deg2rad(58.9), 0.3, 0.6 * np.pi)
    with pytest.raises(ContractViolationError):
        derive_geometry(config)
    dphi = force_phase_angle(0.3, 0.49 * np.pi)
    assert 0.0 < dphi < np.pi


def test_force_rabi_inversion():
    config = trap()
    geometry = derive_geometry(config)
    recovered = force_phase_from_rabi(geometry.Omega_f, geometry.eta, config.Omega_c, config.theta_A)
    assert recovered == pytest.approx(geometry.delta_phi)


def test_light_shift_value_and_regime():
    shift = carrier_light_shift(TWO_PI * 100e3, TWO_PI * 4.8e6, TWO_PI * np.sqrt(3) * 500e3)
    assert shift / TWO_PI == pytest.approx(2153.4, rel=1e-3)
    with pytest.raises(PerturbativeRegimeError):
        carrier_light_shift(TWO_PI * 100e3, TWO_PI * 4.8e6, TWO_PI * 4.5e6)


def test_gate_phase_consistency():
    assert gate_phase(np.sqrt(0.52), 1.0) == pytest.approx(0.26 * np.pi, abs=1e-12)
    with pytest.raises(SingularInputError):
        gate_phase(1.0, 0.0)


def test_loop_closure():
    omega_f, delta = TWO_PI * 16.3e3, TWO_PI * 22.7e3
    alpha, phase = displacement_trajectory(omega_f, delta, loop_period(delta))
    assert abs(alpha) < 1e-12
    assert phase == pytest.approx(gate_phase(omega_f, delta), abs=1e-12)


def test_displacement_trajectory_vectorized():
    omega_f, delta = 2.0, 1.0
    taus = np.linspace(0, 2 * np.pi, 9)
    alpha, phase = displacement_trajectory(omega_f, delta, taus)
    assert alpha.shape == taus.shape
    assert alpha[0] == 0 and phase[0] == 0
    assert np.max(np.abs(alpha)) == pytest.approx(omega_f / delta, rel=1e-12), "Loop diameter is Ω_f/δ"
    assert np.all(np.diff(phase) >= 0)


def test_force_pulse_params_contract():
    with pytest.raises(SingularInputError):
        ForcePulseParams(1.0, 0.0)
    with pytest.raises(ContractViolationError):
        ForcePulseParams(1.0, 1.0, tau=-1.0)
    params = ForcePulseParams(1.0, 2.0).with_tau(3.0)
    assert params.tau == 3.0
    assert params.loop_period == pytest.approx(np.pi)


def test_trap_config_validation():
    with pytest.raises(ContractViolationError):
        TrapConfig(omega_c=-1, Omega_c=1, omega_0=1, theta_L=1, theta_A=1, beta=1)
    with pytest.raises(ContractViolationError):
        TrapConfig(omega_c=1, Omega_c=1, omega_0=1, theta_L=1, theta_A=1, beta=4)


def test_geometry_override_of_force_phase():
    geometry = derive_geometry(trap(), delta_phi=1.0)
    assert geometry.delta_phi == 1.0
    assert set(geometry.to_dict()) >= {"eta", "p_real", "Omega_f"}


def test_standing_wave_integer_and_force_rabi_edges():
    dk = delta_k(397e-9, np.deg2rad(58.9))
    assert standing_wave_integer(dk, 2 * np.pi / dk) == pytest.approx(1.0)
    assert force_rabi(0.13, 1e5, 0.0) == 0.0
    assert force_rabi(0.13, 1e5, np.pi) == pytest.approx(2 * 0.13 * 1e5)
