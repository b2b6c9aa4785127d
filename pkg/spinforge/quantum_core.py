"""Two-qubit quantum algebra on dense 4x4 matrices.

Basis order is (↑↑, ↑↓, ↓↑, ↓↓) with σ_z|↑⟩ = +|↑⟩, so a single qubit has
|↑⟩ = (1, 0) and |↓⟩ = (0, 1).  Collective rotations use the Bloch-sphere
convention R(θ, φ) = exp(−i(θ/2)(cos φ σ_x + sin φ σ_y)) and Bell-class states
are |E(r)⟩ = (|↑↑⟩ + e^{ir}|↓↓⟩)/√2, whose corner coherence is
ρ_{↑↑,↓↓} = e^{−ir}/2.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from scipy.special import entr

from .errors import ContractViolationError, NumericalFailureError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = -1e-10
EIGENSYSTEM_INPUT_TOL = 1e-10

BASIS_LABELS = ("uu", "ud", "du", "dd")

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z)

# PAULI_BASIS[i, j] = σ_i ⊗ σ_j
PAULI_BASIS = np.array([[np.kron(si, sj) for sj in PAULIS] for si in PAULIS])

# number of qubits whose labels differ between basis states a and b
SPIN_FLIPS = np.array(
    [[bin(a ^ b).count("1") for b in range(4)] for a in range(4)], dtype=float
)
# (σ_z1 + σ_z2)/2 and (σ_z1 − σ_z2)/2 on the basis
SPIN_SUM = np.array([1.0, 0.0, 0.0, -1.0])
SPIN_DIFF = np.array([0.0, 1.0, -1.0, 0.0])


def as_complex_matrix(m, dim=None) -> np.ndarray:
    """Validate and return ``m`` as a square complex array with finite entries."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ContractViolationError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ContractViolationError(f"expected a {dim}x{dim} matrix, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolationError("matrix contains NaN or Inf entries")
    return arr


class DensityMatrix:
    """Immutable two-qubit density matrix in the (↑↑, ↑↓, ↓↑, ↓↓) basis."""

    __slots__ = ("_matrix",)

    def __init__(self, matrix, validate: bool = True):
        arr = as_complex_matrix(matrix, dim=4).copy()
        if validate:
            check_density_matrix(arr)
        arr.setflags(write=False)
        self._matrix = arr

    @classmethod
    def from_state(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).reshape(4)
        norm = np.vdot(psi, psi).real
        if norm <= 0:
            raise ContractViolationError("state vector has zero norm")
        psi = psi / np.sqrt(norm)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_unnormalized(cls, matrix) -> "DensityMatrix":
        """Symmetrize and renormalize accumulated round-off before validating."""
        arr = as_complex_matrix(matrix, dim=4)
        arr = 0.5 * (arr + arr.conj().T)
        trace = np.trace(arr).real
        if trace <= 0:
            raise ContractViolationError(f"matrix trace {trace} is not positive")
        return cls(arr / trace)

    @classmethod
    def basis(cls, label: str) -> "DensityMatrix":
        psi = np.zeros(4, dtype=complex)
        psi[BASIS_LABELS.index(label)] = 1.0
        return cls.from_state(psi)

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(4, dtype=complex) / 4.0)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def populations(self) -> np.ndarray:
        return self._matrix.diagonal().real.copy()

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._matrix, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return bool(np.array_equal(self._matrix, other._matrix))

    def __hash__(self):
        return hash(self._matrix.tobytes())

    def __repr__(self):
        return f"DensityMatrix(populations={np.round(self.populations, 6).tolist()})"

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self._matrix, np.asarray(other), atol=atol, rtol=0.0))


def check_density_matrix(m: np.ndarray) -> None:
    """Raise :class:`ContractViolationError` unless ``m`` is Hermitian, unit-trace and PSD."""
    herm = np.max(np.abs(m - m.conj().T))
    if herm > HERMITIAN_TOL:
        raise ContractViolationError(f"density matrix not Hermitian (deviation {herm:.3e})")
    trace = np.trace(m)
    if abs(trace - 1.0) > TRACE_TOL:
        raise ContractViolationError(f"density matrix trace {trace.real:.15f} != 1")
    lowest = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lowest < EIGEN_TOL:
        raise ContractViolationError(f"density matrix has negative eigenvalue {lowest:.3e}")


def _matrix_of(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    return as_complex_matrix(rho)


@dataclass(frozen=True)
class Rotation:
    """Single-qubit Bloch rotation through ``theta`` about azimuth ``phi`` (radians)."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)


def rotation_matrix(rot: Rotation) -> np.ndarray:
    """Return the 2x2 unitary exp(−i(θ/2)(cos φ σ_x + sin φ σ_y))."""
    half = 0.5 * rot.theta
    axis = np.cos(rot.phi) * SIGMA_X + np.sin(rot.phi) * SIGMA_Y
    return np.cos(half) * SIGMA_I - 1j * np.sin(half) * axis


def collective_matrix(rot: Rotation) -> np.ndarray:
    """R ⊗ R for the same rotation on both qubits."""
    r = rotation_matrix(rot)
    return np.kron(r, r)


def collective_rotate(rho: DensityMatrix, rot: Rotation) -> DensityMatrix:
    u = collective_matrix(rot)
    return DensityMatrix.from_unnormalized(u @ rho.matrix @ u.conj().T)


def pauli_decompose(rho) -> np.ndarray:
    """Return c[i, j] = Tr(ρ σ_i ⊗ σ_j)/4 as a real 4x4 array."""
    m = _matrix_of(rho)
    c = np.einsum("ijab,ba->ij", PAULI_BASIS, m) / 4.0
    return c.real


def pauli_compose(c) -> np.ndarray:
    """Inverse of :func:`pauli_decompose`; the input need not be physical."""
    c = np.asarray(c)
    if c.shape != (4, 4):
        raise ContractViolationError(f"Pauli coefficients must be 4x4, got {c.shape}")
    return np.einsum("ij,ijab->ab", c, PAULI_BASIS)


def bell_state(r: float) -> DensityMatrix:
    psi = np.array([1.0, 0.0, 0.0, np.exp(1j * r)], dtype=complex) / np.sqrt(2.0)
    return DensityMatrix.from_state(psi)


def bell_fidelity(rho) -> Tuple[float, float]:
    """Return (F, best_r) with F = max_r ⟨E(r)|ρ|E(r)⟩.

    The maximum is attained in closed form at r = −arg ρ_{↑↑,↓↓}; a vanishing
    corner coherence reports best_r = 0.
    """
    m = _matrix_of(rho)
    corner = m[0, 3]
    fidelity = 0.5 * (m[0, 0].real + m[3, 3].real) + abs(corner)
    best_r = 0.0 if abs(corner) < 1e-15 else float((-np.angle(corner)) % TWO_PI)
    return float(np.clip(fidelity, 0.0, 1.0)), best_r


def corner_coherence(c) -> complex:
    """Corner coherence ρ_{↑↑,↓↓} expressed through Pauli coefficients."""
    c = np.asarray(c)
    return complex(c[1, 1] - c[2, 2] - 1j * (c[1, 2] + c[2, 1]))


def hermitian_eigensystem(m) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors (columns)."""
    arr = as_complex_matrix(m)
    scale = max(1.0, float(np.max(np.abs(arr))))
    deviation = float(np.max(np.abs(arr - arr.conj().T)))
    if deviation > EIGENSYSTEM_INPUT_TOL * scale:
        raise ContractViolationError(
            f"hermitian_eigensystem requires a Hermitian matrix (deviation {deviation:.3e})"
        )
    try:
        values, vectors = np.linalg.eigh(0.5 * (arr + arr.conj().T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Hermitian eigen-solve did not converge: {exc}") from exc
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


def psd_sqrt(m) -> np.ndarray:
    values, vectors = hermitian_eigensystem(m)
    root = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * root) @ vectors.conj().T


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state.

    Uses the Hermitian form √ρ ρ̃ √ρ, which shares its spectrum with ρρ̃.
    """
    m = _matrix_of(rho)
    yy = np.kron(SIGMA_Y, SIGMA_Y)
    flipped = yy @ m.conj() @ yy
    root = psd_sqrt(m)
    values, _ = hermitian_eigensystem(root @ flipped @ root)
    lambdas = np.sqrt(np.clip(values, 0.0, None))
    c = lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]
    return float(np.clip(c, 0.0, 1.0))


def binary_entropy(x) -> float:
    x = float(np.clip(x, 0.0, 1.0))
    return float((entr(x) + entr(1.0 - x)) / np.log(2.0))


def eof_from_concurrence(c: float) -> float:
    c = float(np.clip(c, 0.0, 1.0))
    return binary_entropy(0.5 * (1.0 + np.sqrt(1.0 - c * c)))


def entanglement_of_formation(rho) -> float:
    return eof_from_concurrence(concurrence(rho))


@dataclass(frozen=True)
class EntanglementReport:
    fidelity: float
    best_r: float
    coherence: complex
    concurrence: float
    eof: float

    def to_dict(self) -> dict:
        data = asdict(self)
        data["coherence"] = [self.coherence.real, self.coherence.imag]
        data["coherence_abs"] = abs(self.coherence)
        return data


def entanglement_report(rho) -> EntanglementReport:
    fidelity, best_r = bell_fidelity(rho)
    c = concurrence(rho)
    report = EntanglementReport(
        fidelity=fidelity,
        best_r=best_r,
        coherence=corner_coherence(pauli_decompose(rho)),
        concurrence=c,
        eof=eof_from_concurrence(c),
    )
    if report.fidelity < 2.0 * abs(report.coherence) - 1e-12:
        raise ContractViolationError(
            f"F = {report.fidelity:.6f} below 2|C| = {2 * abs(report.coherence):.6f}; "
            "input is not positive semidefinite"
        )
    return report
