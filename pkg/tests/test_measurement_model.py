import os
import sys

# Ensure project root is on sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from spinforge.errors import ContractViolationError, InputMismatchError, InvalidCalibrationError
from spinforge.gate_sim import SimOptions, build_echo_sequence
from spinforge.measurement_model import (
    OutcomeProbs,
    ReadoutModel,
    ScanData,
    ScanRecord,
    apply_preparation_error,
    apply_readout_errors,
    correct_readout,
    expected_counts,
    generate_phi_scan,
    generate_tau_scan,
    outcome_probs,
    parity_signal,
    phi_scan_from_state,
    preparation_state,
    pulse_area_from_duration,
    sample_counts,
    uniform_phi_grid,
)
from spinforge.quantum_core import DensityMatrix, bell_state
from spinforge.trap_physics import ForcePulseParams, loop_period

TWO_PI = 2 * np.pi
DELTA = TWO_PI * 22.7e3


def test_outcome_probs_pool_middle_states():
    rho = DensityMatrix(np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex))
    probs = outcome_probs(rho)
    assert probs.as_array() == pytest.approx([0.1, 0.5, 0.4])
    with pytest.raises(ContractViolationError):
        OutcomeProbs(0.5, 0.6, 0.1)


def test_confusion_matrix_is_column_stochastic():
    m = ReadoutModel().confusion_matrix()
    assert np.allclose(m.sum(axis=0), 1.0)
    assert m[0, 0] == pytest.approx(0.95**2), "Both ions read correctly with probability 0.9025"
    assert np.allclose(ReadoutModel.ideal().confusion_matrix(), np.eye(3))


def test_readout_correction_inverts_errors():
    model = ReadoutModel(eps_bright=0.04, eps_dark=0.07)
    probs = OutcomeProbs(0.3, 0.45, 0.25)
    observed = apply_readout_errors(probs, model).as_array()
    assert correct_readout(observed, model) == pytest.approx(probs.as_array(), abs=1e-12)
    batch = np.vstack([observed, observed])
    assert correct_readout(batch, model).shape == (2, 3)


def test_readout_model_validation():
    with pytest.raises(ContractViolationError):
        ReadoutModel(eps_bright=1.5)


def test_preparation_state():
    rho = preparation_state(0.99)
    assert rho.populations == pytest.approx([1e-4, 0.0099, 0.0099, 0.9801])
    assert preparation_state(1.0).allclose(DensityMatrix.basis("dd"))
    assert apply_preparation_error(DensityMatrix.basis("dd"), 0.01).allclose(rho)


def test_preparation_error_acts_on_any_input():
    q = 0.1
    bell = bell_state(0.3)
    noisy = apply_preparation_error(bell, q)
    pops = noisy.populations
    assert pops[1] + pops[2] == pytest.approx(2 * q * (1 - q))
    expected = (1 - q) ** 2 * bell.matrix[0, 3] + q**2 * bell.matrix[3, 0]
    assert noisy.matrix[0, 3] == pytest.approx(expected)
    assert apply_preparation_error(bell, 0.0).allclose(bell)
    with pytest.raises(ContractViolationError):
        apply_preparation_error(bell, 1.5)


def test_sample_counts_deterministic_and_complete():
    probs = OutcomeProbs(0.2, 0.5, 0.3)
    first = sample_counts(probs, 500, 42)
    assert sum(first) == 500
    assert sample_counts(probs, 500, 42) == first
    assert sample_counts(OutcomeProbs(1.0, 0.0, 0.0), 10, 1) == (10, 0, 0)


def test_sample_counts_statistics():
    probs = OutcomeProbs(0.2, 0.5, 0.3)
    rng = np.random.default_rng(0)
    counts = np.array([sample_counts(probs, 1000, rng) for _ in range(400)])
    assert counts.mean(axis=0) / 1000 == pytest.approx(probs.as_array(), abs=0.005)


def test_expected_counts_largest_remainder():
    assert expected_counts(OutcomeProbs(1 / 3, 1 / 3, 1 / 3), 10) == (4, 3, 3)
    assert sum(expected_counts(OutcomeProbs(0.123, 0.456, 0.421), 997)) == 997


def test_parity_signal_convention():
    assert parity_signal(OutcomeProbs(0.5, 0.0, 0.5)) == 1.0
    assert parity_signal(np.array([[0.0, 1.0, 0.0], [0.25, 0.5, 0.25]])) == pytest.approx([-1.0, 0.0])


def test_pulse_area_from_duration():
    omega_c = TWO_PI * 100e3
    assert pulse_area_from_duration(omega_c, 2.8e-6, 0.1e-6) == pytest.approx(0.54 * np.pi)
    with pytest.raises(InvalidCalibrationError):
        pulse_area_from_duration(omega_c, 0.05e-6, 0.1e-6)


def test_phi_scan_reproducible_and_thread_independent(monkeypatch):
    phis = uniform_phi_grid(12)
    rho = bell_state(0.4)
    monkeypatch.setenv("SPINFORGE_THREADS", "1")
    serial = phi_scan_from_state(rho, 0.54 * np.pi, phis, 200, seed=9)
    monkeypatch.setenv("SPINFORGE_THREADS", "4")
    threaded = phi_scan_from_state(rho, 0.54 * np.pi, phis, 200, seed=9)
    assert np.array_equal(serial.counts, threaded.counts), "Counts should not depend on scheduling"
    other = phi_scan_from_state(rho, 0.54 * np.pi, phis, 200, seed=10)
    assert not np.array_equal(serial.counts, other.counts)


def test_exact_phi_scan_carries_probabilities():
    scan = phi_scan_from_state(bell_state(0.0), np.pi / 2, uniform_phi_grid(8), 100, seed=0, exact=True)
    assert scan.is_exact
    assert scan.frequencies().sum(axis=1) == pytest.approx(np.ones(8))
    assert scan.metadata["parity_convention"] == "p_uu + p_dd - p_mid"
    assert scan.theta == pytest.approx(np.pi / 2)


def test_generate_scans_with_sequences():
    params = ForcePulseParams(np.sqrt(0.5) * DELTA, DELTA, 0.0, loop_period(DELTA))
    readout = ReadoutModel()
    seq = build_echo_sequence("double_w", params)
    scan = generate_phi_scan(None, seq, 0.54 * np.pi, uniform_phi_grid(10), 100, 3, readout, SimOptions())
    assert len(scan) == 10 and scan.kind == "phi"
    assert scan.metadata["sequence"] == "double_w"

    taus = np.linspace(0, 2 * loop_period(DELTA), 7)
    tau_scan = generate_tau_scan(
        None, lambda t: build_echo_sequence("single_w", params.with_tau(t)), taus, 100, 3, readout, SimOptions()
    )
    assert tau_scan.kind == "tau"
    assert tau_scan.settings == pytest.approx(taus)
    with pytest.raises(ContractViolationError):
        generate_tau_scan(None, lambda t: seq, taus[::-1], 100, 3, readout, SimOptions())


def test_scan_data_validation():
    good = ScanRecord("phi", (1, 1, 1), 3, theta=1.0, phi=0.0)
    with pytest.raises(ContractViolationError):
        ScanRecord("phi", (1, 1, 1), 4, theta=1.0, phi=0.0)
    with pytest.raises(ContractViolationError):
        ScanData((good, ScanRecord("phi", (1, 1, 1), 3, theta=1.0, phi=0.0)))
    with pytest.raises(InputMismatchError):
        ScanData((good, ScanRecord("tau", (1, 1, 1), 3, tau=1.0)))
    mixed = ScanData((good, ScanRecord("phi", (1, 1, 1), 3, theta=2.0, phi=1.0)))
    with pytest.raises(InputMismatchError):
        mixed.theta
