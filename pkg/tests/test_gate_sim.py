import logging
import os
import sys

# Ensure project root is on sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from spinforge.errors import ContractViolationError, TruncationError
from spinforge.gate_sim import (
    CarrierRotation,
    ForcePulse,
    PulseSequence,
    SimOptions,
    Wait,
    apply_qubit_dephasing,
    build_echo_sequence,
    fock_displacement,
    model_populations,
    run_sequence,
    sequence_for_taus,
    tau_grid,
    thermal_motional_state,
)
from spinforge.measurement_model import outcome_probs
from spinforge.quantum_core import DensityMatrix, bell_state, concurrence, entanglement_report
from spinforge.trap_physics import ForcePulseParams, TrapConfig, displacement_trajectory, loop_period

TWO_PI = 2 * np.pi
DELTA = TWO_PI * 22.7e3
DELTA_C = TWO_PI * 2.15e3


def gate_params(ratio_sq=0.5, delta_c=DELTA_C):
    return ForcePulseParams(np.sqrt(ratio_sq) * DELTA, DELTA, delta_c, loop_period(DELTA))


def test_echo_sequences_layout():
    single = build_echo_sequence("single_w", gate_params())
    double = build_echo_sequence("double-W", gate_params())
    assert len(single) == 4 and len(single.force_pulses) == 1
    assert len(double) == 5 and len(double.force_pulses) == 2
    with pytest.raises(ContractViolationError):
        build_echo_sequence("triple_w", gate_params())


def test_double_w_prepares_bell_state():
    rho = run_sequence(None, build_echo_sequence("double_w", gate_params()), SimOptions())
    report = entanglement_report(rho)
    assert report.fidelity >= 0.999, "Ideal double-W gate should produce a Bell state"
    assert report.best_r == pytest.approx(1.5 * np.pi, abs=1e-6)
    assert rho.populations[1] + rho.populations[2] <= 1e-3


@pytest.mark.parametrize("thermal_factor", [False, True])
def test_double_w_is_temperature_insensitive(thermal_factor):
    seq = build_echo_sequence("double_w", gate_params())
    cold = run_sequence(None, seq, SimOptions(include_thermal_coherence_factor=thermal_factor))
    warm = run_sequence(None, seq, SimOptions(nbar=0.2, include_thermal_coherence_factor=thermal_factor))
    assert cold.allclose(warm, atol=1e-12)


def test_double_w_cancels_light_shift():
    base = run_sequence(None, build_echo_sequence("double_w", gate_params(delta_c=0.0)), SimOptions())
    shifted = run_sequence(None, build_echo_sequence("double_w", gate_params(delta_c=5 * DELTA_C)), SimOptions())
    assert base.allclose(shifted, atol=1e-10)


def test_no_force_gives_separable_output():
    params = ForcePulseParams(0.0, DELTA, DELTA_C, loop_period(DELTA))
    rho = run_sequence(None, build_echo_sequence("double_w", params), SimOptions(gamma=3e3))
    assert concurrence(rho) == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("gamma", [0.0, 5.4e3])
def test_single_w_matches_population_model(gamma):
    omega_f, delta = TWO_PI * 23e3, TWO_PI * 12.6e3
    params = ForcePulseParams(omega_f, delta, DELTA_C)
    taus = np.linspace(0.0, 3 * loop_period(delta), 100)
    expected_uu, expected_mid = model_populations(taus, gamma, delta, omega_f, DELTA_C)
    for tau, p_uu, p_mid in zip(taus, expected_uu, expected_mid):
        seq = build_echo_sequence("single_w", params.with_tau(tau))
        probs = outcome_probs(run_sequence(None, seq, SimOptions(gamma=gamma)))
        assert probs.p_uu == pytest.approx(p_uu, abs=1e-6)
        assert probs.p_mid == pytest.approx(p_mid, abs=1e-6)


def test_population_model_edges():
    p_uu, p_mid = model_populations(0.0, 5.4e3, TWO_PI * 12.6e3, TWO_PI * 23e3, DELTA_C)
    assert p_uu == pytest.approx(0.0, abs=1e-12), "No force time means the echo returns to ↓↓"
    assert p_mid == pytest.approx(0.0, abs=1e-12)
    p_uu, p_mid = model_populations(1.0, 1e4, TWO_PI * 12.6e3, TWO_PI * 23e3, DELTA_C)
    assert p_uu == pytest.approx(0.25, abs=1e-6) and p_mid == pytest.approx(0.5, abs=1e-6)


def test_population_model_thermal_flag():
    args = (np.array([20e-6]), 0.0, TWO_PI * 12.6e3, TWO_PI * 23e3, 0.0)
    cold = model_populations(*args, nbar=0.5)
    warm = model_populations(*args, nbar=0.5, include_thermal_coherence_factor=True)
    assert not np.allclose(cold[0], warm[0]), "Thermal factor should change mid-loop populations"


def test_single_w_closure_phase_follows_light_shift():
    """Single W with a π/2 gate phase: corner phase −2 atan(cos φ1), middle ½ sin² φ1."""
    phi_1 = 0.3
    tau = loop_period(DELTA)
    params = ForcePulseParams(DELTA, DELTA, phi_1 / tau, tau)
    rho = run_sequence(None, build_echo_sequence("single_w", params), SimOptions())
    report = entanglement_report(rho)
    assert report.best_r == pytest.approx((-2 * np.arctan(np.cos(phi_1))) % TWO_PI, abs=1e-9)
    assert rho.populations[1] + rho.populations[2] == pytest.approx(0.5 * np.sin(phi_1) ** 2, abs=1e-12)


def test_fock_mode_matches_analytic_mid_loop():
    params = gate_params().with_tau(0.37 * loop_period(DELTA))
    seq = build_echo_sequence("single_w", params)
    analytic = run_sequence(None, seq, SimOptions(nbar=0.2, include_thermal_coherence_factor=True))
    fock = run_sequence(None, seq, SimOptions(mode="fock", fock_dim=30, nbar=0.2, steps_per_period=400))
    assert fock.allclose(analytic, atol=1e-6)


def test_fock_mode_bell_state():
    seq = build_echo_sequence("double_w", gate_params())
    rho = run_sequence(None, seq, SimOptions(mode="fock", fock_dim=20, steps_per_period=400))
    assert entanglement_report(rho).fidelity >= 0.999


def test_fock_truncation_is_reported():
    params = ForcePulseParams(6 * DELTA, DELTA, 0.0, 0.5 * loop_period(DELTA))
    with pytest.raises(TruncationError):
        run_sequence(None, build_echo_sequence("single_w", params), SimOptions(mode="fock", fock_dim=5))
    with pytest.raises(TruncationError):
        thermal_motional_state(5.0, 10)


@pytest.mark.parametrize("ratio", [0.72, 2.0])
def test_fock_displacement_oracle(ratio):
    omega_f = ratio * DELTA
    taus = np.linspace(0.0, loop_period(DELTA), 50)
    alphas, phases = displacement_trajectory(omega_f, DELTA, taus)
    for tau, alpha, phase in zip(taus, alphas, phases):
        beta, fock_phase = fock_displacement(omega_f, DELTA, tau, fock_dim=40)
        assert abs(beta - alpha) < 1e-4, f"<a> off at tau={tau:.3e}"
        assert abs(np.angle(np.exp(1j * (fock_phase - phase)))) < 1e-4, f"phase off at tau={tau:.3e}"


def test_fock_step_halving_converges():
    omega_f = 2.0 * DELTA
    for tau in (0.3 * loop_period(DELTA), 0.8 * loop_period(DELTA)):
        coarse = fock_displacement(omega_f, DELTA, tau, steps_per_period=500)
        fine = fock_displacement(omega_f, DELTA, tau, steps_per_period=1000)
        assert abs(coarse[0] - fine[0]) < 1e-7
        assert abs(coarse[1] - fine[1]) < 1e-7
    seq = build_echo_sequence("double_w", gate_params().with_tau(0.6 * loop_period(DELTA)))
    coarse = run_sequence(None, seq, SimOptions(mode="fock", fock_dim=30, steps_per_period=500))
    fine = run_sequence(None, seq, SimOptions(mode="fock", fock_dim=30, steps_per_period=1000))
    assert np.max(np.abs(coarse.matrix - fine.matrix)) < 1e-7


def random_sequence(rng):
    ops = []
    for _ in range(rng.integers(1, 7)):
        kind = rng.integers(3)
        if kind == 0:
            ops.append(CarrierRotation(rng.uniform(0, TWO_PI), rng.uniform(0, TWO_PI)))
        elif kind == 1:
            delta = rng.uniform(0.8, 1.2) * DELTA
            params = ForcePulseParams(rng.uniform(0.0, 0.4) * delta, delta, rng.uniform(0.0, DELTA_C),
                                      rng.uniform(0.0, loop_period(delta)))
            ops.append(ForcePulse(params))
        else:
            ops.append(Wait(rng.uniform(0.0, 50e-6)))
    return PulseSequence(tuple(ops))


def test_analytic_and_fock_agree_on_random_sequences():
    rng = np.random.default_rng(2024)
    analytic_opts = SimOptions(nbar=0.1, gamma=300.0, include_thermal_coherence_factor=True)
    fock_opts = analytic_opts.replace(mode="fock", fock_dim=40)
    for index in range(20):
        seq = random_sequence(rng)
        initial = DensityMatrix.basis("dd") if index % 2 else bell_state(rng.uniform(0, TWO_PI))
        analytic = run_sequence(None, seq, analytic_opts, initial=initial)
        fock = run_sequence(None, seq, fock_opts, initial=initial)
        worst = np.max(np.abs(analytic.matrix - fock.matrix))
        assert worst < 1e-5, f"sequence {index} ({len(seq.ops)} ops) differs by {worst:.2e}"


def test_dephasing_decays_coherences():
    rho = apply_qubit_dephasing(bell_state(0.0), 1e3, 1e-3)
    assert abs(rho.matrix[0, 3]) == pytest.approx(0.5 * np.exp(-2.0))
    assert rho.populations[0] == pytest.approx(0.5)


def test_waits_and_custom_sequences():
    seq = PulseSequence((CarrierRotation(np.pi / 2), Wait(1e-3), CarrierRotation(np.pi / 2, np.pi)), name="ramsey")
    rho = run_sequence(None, seq, SimOptions(gamma=1e3), initial=DensityMatrix.basis("dd"))
    assert rho.populations[3] == pytest.approx(0.25 * (1 + np.exp(-1.0)) ** 2, abs=1e-12)
    with pytest.raises(ContractViolationError):
        Wait(-1.0)


def test_sim_options_validation():
    with pytest.raises(ContractViolationError):
        SimOptions(mode="quantum")
    with pytest.raises(ContractViolationError):
        SimOptions(steps_per_period=100)
    assert SimOptions().replace(gamma=2.0).gamma == 2.0


def test_large_detuning_warns(caplog):
    trap = TrapConfig(TWO_PI * 500e3, TWO_PI * 100e3, TWO_PI * 4.8e6, 1.0, 1.0, 1.0)
    params = ForcePulseParams(TWO_PI * 50e3, TWO_PI * 100e3, 0.0, 1e-5)
    with caplog.at_level(logging.WARNING):
        run_sequence(trap, build_echo_sequence("single_w", params), SimOptions())
    assert "COM excitation" in caplog.text


def test_tau_grid_and_sequences():
    taus = tau_grid(DELTA, 2.0, 5)
    assert taus[0] == 0 and taus[-1] == pytest.approx(2 * loop_period(DELTA))
    seqs = sequence_for_taus("single_w", gate_params(), taus)
    assert [s.force_pulses[0].params.tau for s in seqs] == list(taus)
