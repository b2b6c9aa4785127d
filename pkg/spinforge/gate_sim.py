"""Pulse-sequence simulation of the two-spin ⊗ stretch-mode system.

Two interchangeable representations of the joint state are provided:

* :class:`BranchState` (``mode="analytic"``) keeps the motion implicit.  The
  joint density matrix is a sum of spin blocks M tensored with
  D(x_L) ρ_th D(x_R)†, and force pulses only move blocks between displacement
  keys and multiply them by phases.
* :class:`FockState` (``mode="fock"``) keeps a dense (4·D)² density matrix and
  integrates the interaction-picture Hamiltonian with fixed-step RK4.

Light shift and qubit dephasing commute with the spin-dependent force, so
both representations apply them exactly as diagonal channels on the spin
indices.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, Optional, Tuple, Union

import numpy as np
from scipy.linalg import expm

from .errors import ContractViolationError, SingularInputError, TruncationError
from .quantum_core import (
    SPIN_DIFF,
    SPIN_FLIPS,
    SPIN_SUM,
    DensityMatrix,
    Rotation,
    collective_matrix,
)
from .trap_physics import (
    ForcePulseParams,
    TrapConfig,
    displacement_trajectory,
    mode_frequencies,
)

logger = logging.getLogger(__name__)

TRUNCATION_TOL = 1e-6
KEY_DECIMALS = 12
MODES = ("analytic", "fock")
ECHO_KINDS = ("single_w", "double_w")


@dataclass(frozen=True)
class CarrierRotation:
    theta: float
    phi: float = 0.0


@dataclass(frozen=True)
class ForcePulse:
    params: ForcePulseParams


@dataclass(frozen=True)
class Wait:
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ContractViolationError("wait duration must be non-negative")


PulseOp = Union[CarrierRotation, ForcePulse, Wait]


@dataclass(frozen=True)
class PulseSequence:
    ops: Tuple[PulseOp, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))

    def __len__(self):
        return len(self.ops)

    @property
    def force_pulses(self) -> Tuple[ForcePulse, ...]:
        return tuple(op for op in self.ops if isinstance(op, ForcePulse))


@dataclass(frozen=True)
class SimOptions:
    mode: str = "analytic"
    fock_dim: int = 40
    nbar: float = 0.0
    gamma: float = 0.0
    include_thermal_coherence_factor: bool = False
    steps_per_period: int = 1000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolationError(f"unknown simulation mode {self.mode!r}")
        if self.mode == "fock" and self.fock_dim < 2:
            raise ContractViolationError("fock_dim must be at least 2 in fock mode")
        if self.nbar < 0 or self.gamma < 0:
            raise ContractViolationError("nbar and gamma must be non-negative")
        if self.steps_per_period < 200:
            raise ContractViolationError("steps_per_period must be at least 200")

    def replace(self, **changes) -> "SimOptions":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# joint-state representations
# --------------------------------------------------------------------------


def _key(x_left: complex, x_right: complex) -> Tuple[float, float, float, float]:
    return (
        round(x_left.real, KEY_DECIMALS),
        round(x_left.imag, KEY_DECIMALS),
        round(x_right.real, KEY_DECIMALS),
        round(x_right.imag, KEY_DECIMALS),
    )


@dataclass
class BranchState:
    """Joint state Σ_k M_k ⊗ D(x_L,k) ρ_th D(x_R,k)† with implicit thermal motion."""

    terms: Dict[tuple, Tuple[complex, complex, np.ndarray]] = field(default_factory=dict)
    nbar: float = 0.0
    thermal_factor: bool = False

    @classmethod
    def from_spin(cls, spin: DensityMatrix, nbar: float = 0.0, thermal_factor: bool = False):
        state = cls(nbar=nbar, thermal_factor=thermal_factor)
        state._add(0j, 0j, np.array(spin.matrix, dtype=complex))
        return state

    def _add(self, x_left: complex, x_right: complex, block: np.ndarray) -> None:
        key = _key(x_left, x_right)
        if key in self.terms:
            xl, xr, existing = self.terms[key]
            self.terms[key] = (xl, xr, existing + block)
        else:
            self.terms[key] = (x_left, x_right, block)

    def map_spin(self, fn: Callable[[np.ndarray], np.ndarray]) -> "BranchState":
        out = BranchState(nbar=self.nbar, thermal_factor=self.thermal_factor)
        for key, (xl, xr, block) in self.terms.items():
            out.terms[key] = (xl, xr, fn(block))
        return out

    def displaced(self, alpha: complex, phase: float) -> "BranchState":
        """Apply D(s·α) e^{i s² Φ} to every spin branch with S_z⁻ eigenvalue s."""
        out = BranchState(nbar=self.nbar, thermal_factor=self.thermal_factor)
        for xl, xr, block in self.terms.values():
            for s_left in (-1, 0, 1):
                rows = SPIN_DIFF == s_left
                for s_right in (-1, 0, 1):
                    cols = SPIN_DIFF == s_right
                    piece = np.zeros_like(block)
                    piece[np.ix_(rows, cols)] = block[np.ix_(rows, cols)]
                    if not np.any(piece):
                        continue
                    shift_l = s_left * alpha
                    shift_r = s_right * alpha
                    factor = np.exp(
                        1j * (shift_l * np.conj(xl)).imag
                        - 1j * (shift_r * np.conj(xr)).imag
                        + 1j * phase * (s_left**2 - s_right**2)
                    )
                    out._add(xl + shift_l, xr + shift_r, factor * piece)
        return out

    @property
    def overlap_scale(self) -> float:
        return 2.0 * self.nbar + 1.0 if self.thermal_factor else 1.0


@dataclass
class FockState:
    """Dense joint density matrix stored as rho[a, m, b, n] (spin a/b, Fock m/n)."""

    rho: np.ndarray
    fock_dim: int

    @classmethod
    def from_spin(cls, spin: DensityMatrix, nbar: float, fock_dim: int) -> "FockState":
        motion = thermal_motional_state(nbar, fock_dim)
        rho = np.einsum("ab,mn->ambn", spin.matrix, motion)
        return cls(rho=rho, fock_dim=fock_dim)

    def map_spin(self, fn_elementwise: np.ndarray) -> "FockState":
        """Multiply every (a, b) spin block by ``fn_elementwise[a, b]``."""
        return FockState(self.rho * fn_elementwise[:, None, :, None], self.fock_dim)

    def motional_populations(self) -> np.ndarray:
        return np.einsum("amam->m", self.rho).real


JointState = Union[BranchState, FockState]


def thermal_motional_state(nbar: float, fock_dim: int) -> np.ndarray:
    """Thermal state truncated to ``fock_dim`` levels and renormalized."""
    if nbar < 0:
        raise ContractViolationError("nbar must be non-negative")
    if fock_dim < 1:
        raise ContractViolationError("fock_dim must be positive")
    if nbar == 0:
        weights = np.zeros(fock_dim)
        weights[0] = 1.0
        return np.diag(weights).astype(complex)
    ratio = nbar / (nbar + 1.0)
    loss = ratio**fock_dim
    if loss > TRUNCATION_TOL:
        raise TruncationError(
            f"thermal state with nbar={nbar} loses {loss:.2e} population above {fock_dim} levels"
        )
    weights = ratio ** np.arange(fock_dim)
    return np.diag(weights / weights.sum()).astype(complex)


def initial_state(spin: DensityMatrix, options: SimOptions) -> JointState:
    if options.mode == "fock":
        return FockState.from_spin(spin, options.nbar, options.fock_dim)
    return BranchState.from_spin(spin, options.nbar, options.include_thermal_coherence_factor)


# --------------------------------------------------------------------------
# channels
# --------------------------------------------------------------------------


def _dephasing_mask(gamma: float, tau: float) -> np.ndarray:
    return np.exp(-gamma * tau * SPIN_FLIPS)


def _light_shift_mask(phi_1: float) -> np.ndarray:
    # ket amplitude e^{-i φ1 m}, m = (σ_z1 + σ_z2)/2
    return np.exp(-1j * phi_1 * (SPIN_SUM[:, None] - SPIN_SUM[None, :]))


def _apply_elementwise(state, mask: np.ndarray):
    if isinstance(state, DensityMatrix):
        return DensityMatrix.from_unnormalized(state.matrix * mask)
    if isinstance(state, FockState):
        return state.map_spin(mask)
    return state.map_spin(lambda block: block * mask)


def apply_qubit_dephasing(state, gamma: float, tau: float):
    """Independent z-dephasing of both qubits: each differing label costs e^{−Γτ}."""
    if gamma * tau < 0:
        raise ContractViolationError("gamma*tau must be non-negative")
    if gamma * tau == 0:
        return state
    return _apply_elementwise(state, _dephasing_mask(gamma, tau))


def apply_carrier(state: JointState, theta: float, phi: float = 0.0) -> JointState:
    u = collective_matrix(Rotation(theta, phi))
    ud = u.conj().T
    if isinstance(state, FockState):
        rho = np.einsum("ac,cmdn,db->ambn", u, state.rho, ud)
        return FockState(rho, state.fock_dim)
    return state.map_spin(lambda block: u @ block @ ud)


def apply_wait(state: JointState, t: float, options: SimOptions) -> JointState:
    return apply_qubit_dephasing(state, options.gamma, t)


def _annihilation(fock_dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, fock_dim)), k=1).astype(complex)


def _step_count(Omega_f: float, delta: float, tau: float, steps_per_period: int) -> int:
    periods = [2.0 * np.pi / abs(delta)]
    if Omega_f > 0:
        periods.append(2.0 * np.pi / Omega_f)
    h_max = min(periods) / steps_per_period
    return max(1, math.ceil(tau / h_max))


def _rk4_propagate(y0: np.ndarray, Omega_f: float, delta: float, tau: float,
                   fock_dim: int, steps_per_period: int) -> np.ndarray:
    """Integrate dy/dt = −i H(t) y for the s = +1 branch Hamiltonian."""
    if tau == 0 or Omega_f == 0:
        return y0.copy()
    a = _annihilation(fock_dim)
    ad = a.conj().T
    g = 0.5 * Omega_f

    def rhs(t, y):
        h = g * (np.exp(-1j * delta * t) * a + np.exp(1j * delta * t) * ad)
        return -1j * (h @ y)

    n_steps = _step_count(Omega_f, delta, tau, steps_per_period)
    h = tau / n_steps
    y = y0.astype(complex)
    t = 0.0
    for _ in range(n_steps):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def branch_propagators(params: ForcePulseParams, fock_dim: int,
                       steps_per_period: int) -> Dict[int, np.ndarray]:
    """Motional propagators for S_z⁻ = −1, 0, +1.

    The s = −1 branch follows from s = +1 by conjugating with the Fock parity
    (−1)^n, which flips the sign of a and a†.
    """
    identity = np.eye(fock_dim, dtype=complex)
    u_plus = _rk4_propagate(identity, params.Omega_f, params.delta, params.tau,
                            fock_dim, steps_per_period)
    parity = (-1.0) ** np.arange(fock_dim)
    u_minus = parity[:, None] * u_plus * parity[None, :]
    return {-1: u_minus, 0: identity, 1: u_plus}


def apply_force_pulse(state: JointState, params: ForcePulseParams,
                      options: SimOptions) -> JointState:
    """Spin-dependent force of duration τ, with light shift and dephasing."""
    if isinstance(state, FockState):
        props = branch_propagators(params, state.fock_dim, options.steps_per_period)
        rho = np.empty_like(state.rho)
        for a in range(4):
            ua = props[int(SPIN_DIFF[a])]
            for b in range(4):
                ub = props[int(SPIN_DIFF[b])]
                rho[a, :, b, :] = ua @ state.rho[a, :, b, :] @ ub.conj().T
        moved = FockState(rho, state.fock_dim)
        top = moved.motional_populations()[-2:].sum()
        if top > TRUNCATION_TOL:
            raise TruncationError(
                f"force pulse pushes {top:.2e} population into the top Fock levels "
                f"(fock_dim={state.fock_dim})"
            )
    else:
        alpha, phase = displacement_trajectory(params.Omega_f, params.delta, params.tau)
        moved = state.displaced(alpha, phase)

    shifted = _apply_elementwise(moved, _light_shift_mask(params.Delta_c * params.tau))
    return apply_qubit_dephasing(shifted, options.gamma, params.tau)


def trace_out_motion(state: JointState) -> DensityMatrix:
    if isinstance(state, FockState):
        spin = np.einsum("ambm->ab", state.rho)
        drift = abs(np.trace(spin) - 1.0)
        if drift > 1e-12:
            logger.debug(f"Renormalizing fock-mode trace drift {drift:.2e}")
        return DensityMatrix.from_unnormalized(spin)

    spin = np.zeros((4, 4), dtype=complex)
    scale = state.overlap_scale
    for xl, xr, block in state.terms.values():
        diff = xl - xr
        weight = np.exp(1j * (np.conj(xr) * xl).imag - 0.5 * scale * abs(diff) ** 2)
        spin += weight * block
    return DensityMatrix.from_unnormalized(spin)


# --------------------------------------------------------------------------
# sequences
# --------------------------------------------------------------------------


def build_echo_sequence(kind: str, params: ForcePulseParams) -> PulseSequence:
    """π/2, W, π, [W], π/2 spin echo, all carrier pulses at φ = 0.

    ``single_w`` puts the force pulse in the first gap only; ``double_w`` puts
    it in both gaps, which cancels the light-shift Z rotations.
    """
    kind = kind.lower().replace("-", "_")
    if kind not in ECHO_KINDS:
        raise ContractViolationError(f"unknown echo kind {kind!r}; expected one of {ECHO_KINDS}")
    half = CarrierRotation(np.pi / 2, 0.0)
    flip = CarrierRotation(np.pi, 0.0)
    w = ForcePulse(params)
    if kind == "single_w":
        ops = (half, w, flip, half)
    else:
        ops = (half, w, flip, w, half)
    return PulseSequence(ops, name=kind)


def _check_detuning(config: TrapConfig, seq: PulseSequence) -> None:
    omega_c, omega_s = mode_frequencies(config.omega_c)
    gap = omega_s - omega_c
    for pulse in seq.force_pulses:
        if abs(pulse.params.delta) > 0.1 * gap:
            logger.warning(
                f"force detuning {pulse.params.delta / (2 * np.pi):.0f} Hz is not small "
                "against the stretch-COM gap; COM excitation is not modelled"
            )


def run_sequence(config: Optional[TrapConfig], seq: PulseSequence, options: SimOptions,
                 initial: Optional[DensityMatrix] = None) -> DensityMatrix:
    """Prepare |↓↓⟩ (or ``initial``) ⊗ thermal motion, apply ``seq``, trace out motion."""
    if config is not None:
        _check_detuning(config, seq)
    spin = initial if initial is not None else DensityMatrix.basis("dd")
    state = initial_state(spin, options)
    for op in seq.ops:
        if isinstance(op, CarrierRotation):
            state = apply_carrier(state, op.theta, op.phi)
        elif isinstance(op, ForcePulse):
            state = apply_force_pulse(state, op.params, options)
        elif isinstance(op, Wait):
            state = apply_wait(state, op.t, options)
        else:
            raise ContractViolationError(f"unsupported pulse op {op!r}")
    return trace_out_motion(state)


def model_populations(tau, gamma: float, delta: float, Omega_f: float, Delta_c: float,
                      nbar: float = 0.0, include_thermal_coherence_factor: bool = False):
    """Closed-form single-W echo populations (P_↑↑, P_↑↓ + P_↓↑).

    P_↑↑ = A − ½ e^{−Γτ−|α|²/2} cos Φ(τ) cos Δ_cτ with
    A = 1/4 + e^{−2Γτ}[cos 2Δ_cτ + e^{−2|α|²}]/8 and P_mid = 1 − 2A.
    The thermal flag scales every |α|² by (2n̄ + 1).
    """
    if delta == 0:
        raise SingularInputError("population model undefined at zero detuning")
    tau_arr = np.asarray(tau, dtype=float)
    alpha, phase = displacement_trajectory(Omega_f, delta, tau_arr)
    a2 = np.abs(alpha) ** 2
    if include_thermal_coherence_factor:
        a2 = a2 * (2.0 * nbar + 1.0)
    decay = np.exp(-2.0 * gamma * tau_arr)
    big_a = 0.25 + decay * (np.cos(2.0 * Delta_c * tau_arr) + np.exp(-2.0 * a2)) / 8.0
    p_uu = big_a - 0.5 * np.exp(-gamma * tau_arr - 0.5 * a2) * np.cos(phase) * np.cos(Delta_c * tau_arr)
    p_mid = 1.0 - 2.0 * big_a
    p_uu = np.clip(p_uu, 0.0, 1.0)
    p_mid = np.clip(p_mid, 0.0, 1.0)
    if np.ndim(p_uu) == 0:
        return float(p_uu), float(p_mid)
    return p_uu, p_mid


def coherent_state(alpha: complex, fock_dim: int) -> np.ndarray:
    a = _annihilation(fock_dim)
    vacuum = np.zeros(fock_dim, dtype=complex)
    vacuum[0] = 1.0
    return expm(alpha * a.conj().T - np.conj(alpha) * a) @ vacuum


def fock_displacement(Omega_f: float, delta: float, tau: float, fock_dim: int = 40,
                      steps_per_period: int = 1000) -> Tuple[complex, float]:
    """Numerically propagate the vacuum under the s = +1 force; return (⟨a⟩, phase).

    The phase is arg⟨β|ψ(τ)⟩ with β = ⟨a⟩, wrapped to (−π, π].
    """
    if delta == 0:
        raise SingularInputError("force detuning must be non-zero")
    vacuum = np.zeros(fock_dim, dtype=complex)
    vacuum[0] = 1.0
    psi = _rk4_propagate(vacuum, Omega_f, delta, tau, fock_dim, steps_per_period)
    if np.sum(np.abs(psi[-2:]) ** 2) > TRUNCATION_TOL:
        raise TruncationError("displacement reaches the Fock truncation boundary")
    a = _annihilation(fock_dim)
    beta = complex(np.vdot(psi, a @ psi))
    overlap = np.vdot(coherent_state(beta, fock_dim), psi)
    return beta, float(np.angle(overlap))


def tau_grid(delta: float, loops: float, points: int) -> np.ndarray:
    """Evenly spaced durations covering ``loops`` loop periods, starting at zero."""
    if points < 1:
        raise ContractViolationError("a tau grid needs at least one point")
    period = 2.0 * np.pi / abs(delta)
    return np.linspace(0.0, loops * period, points)


def sequence_for_taus(kind: str, params: ForcePulseParams,
                      taus: Iterable[float]) -> Tuple[PulseSequence, ...]:
    return tuple(build_echo_sequence(kind, params.with_tau(t)) for t in taus)
