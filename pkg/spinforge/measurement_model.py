"""Three-outcome measurement statistics and synthetic scan generation.

The two ions are not individually resolved, so the outcomes are pooled as
(↑↑, one-up-one-down, ↓↓).  Every scan point draws its shots from a seed
derived from (run seed, point index) through :class:`numpy.random.SeedSequence`,
which keeps datasets bit-identical regardless of evaluation order.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolationError, InputMismatchError, InvalidCalibrationError
from .gate_sim import PulseSequence, SimOptions, run_sequence
from .parallel import map_points
from .quantum_core import SIGMA_I, SIGMA_X, DensityMatrix, Rotation, collective_rotate
from .trap_physics import TrapConfig

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
PARITY_CONVENTION = "p_uu + p_dd - p_mid"
OUTCOMES = ("uu", "mid", "dd")
SCAN_KINDS = ("phi", "tau")

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class ReadoutModel:
    """Per-qubit preparation fidelity and readout flip probabilities."""

    p_prep: float = 0.99
    eps_bright: float = 0.05
    eps_dark: float = 0.05

    def __post_init__(self):
        for name in ("p_prep", "eps_bright", "eps_dark"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractViolationError(f"ReadoutModel.{name}={value} outside [0, 1]")

    @classmethod
    def ideal(cls) -> "ReadoutModel":
        return cls(p_prep=1.0, eps_bright=0.0, eps_dark=0.0)

    def confusion_matrix(self) -> np.ndarray:
        """3x3 column-stochastic matrix M[observed, true] over (uu, mid, dd)."""
        ed, eb = self.eps_dark, self.eps_bright
        true_uu = [(1 - ed) ** 2, 2 * ed * (1 - ed), ed**2]
        true_mid = [(1 - ed) * eb, (1 - ed) * (1 - eb) + ed * eb, ed * (1 - eb)]
        true_dd = [eb**2, 2 * eb * (1 - eb), (1 - eb) ** 2]
        return np.array([true_uu, true_mid, true_dd]).T

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OutcomeProbs:
    p_uu: float
    p_mid: float
    p_dd: float

    def __post_init__(self):
        values = self.as_array()
        if np.any(values < -PROB_TOL) or np.any(values > 1 + PROB_TOL):
            raise ContractViolationError(f"outcome probabilities {values} outside [0, 1]")
        if abs(values.sum() - 1.0) > PROB_TOL:
            raise ContractViolationError(f"outcome probabilities sum to {values.sum():.15f}")

    @classmethod
    def from_array(cls, values) -> "OutcomeProbs":
        values = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
        values = values / values.sum()
        return cls(*values.tolist())

    def as_array(self) -> np.ndarray:
        return np.array([self.p_uu, self.p_mid, self.p_dd], dtype=float)


@dataclass(frozen=True)
class ScanRecord:
    """One scan point: its setting, pooled counts and shot number.

    ``probs`` carries the exact outcome probabilities for noise-free scans.
    """

    kind: str
    counts: Tuple[int, int, int]
    shots: int
    theta: Optional[float] = None
    phi: Optional[float] = None
    tau: Optional[float] = None
    probs: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if self.kind not in SCAN_KINDS:
            raise ContractViolationError(f"unknown scan kind {self.kind!r}")
        if self.shots < 1:
            raise ContractViolationError("a scan record needs at least one shot")
        if any(n < 0 for n in self.counts) or sum(self.counts) != self.shots:
            raise ContractViolationError(f"counts {self.counts} do not sum to {self.shots}")

    @property
    def setting(self) -> float:
        return self.phi if self.kind == "phi" else self.tau

    def frequencies(self) -> np.ndarray:
        if self.probs is not None:
            return np.asarray(self.probs, dtype=float)
        return np.asarray(self.counts, dtype=float) / self.shots


@dataclass
class ScanData:
    records: Tuple[ScanRecord, ...]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.records = tuple(self.records)
        if not self.records:
            raise ContractViolationError("scan data must contain at least one record")
        kinds = {r.kind for r in self.records}
        if len(kinds) != 1:
            raise InputMismatchError(f"scan mixes record kinds {sorted(kinds)}")
        settings = np.array([r.setting for r in self.records], dtype=float)
        if np.any(np.diff(settings) <= 0):
            raise ContractViolationError("scan settings must be strictly increasing")

    @property
    def kind(self) -> str:
        return self.records[0].kind

    @property
    def theta(self) -> float:
        thetas = {r.theta for r in self.records}
        if len(thetas) != 1 or None in thetas:
            raise InputMismatchError("phi scan does not share a single analysis angle")
        return float(thetas.pop())

    @property
    def settings(self) -> np.ndarray:
        return np.array([r.setting for r in self.records], dtype=float)

    @property
    def shots(self) -> np.ndarray:
        return np.array([r.shots for r in self.records], dtype=float)

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.counts for r in self.records], dtype=float)

    @property
    def is_exact(self) -> bool:
        return all(r.probs is not None for r in self.records)

    def frequencies(self) -> np.ndarray:
        return np.array([r.frequencies() for r in self.records])

    def __len__(self):
        return len(self.records)


def outcome_probs(rho: DensityMatrix) -> OutcomeProbs:
    pops = rho.populations
    return OutcomeProbs.from_array([pops[0], pops[1] + pops[2], pops[3]])


def apply_readout_errors(probs: OutcomeProbs, model: ReadoutModel) -> OutcomeProbs:
    return OutcomeProbs.from_array(model.confusion_matrix() @ probs.as_array())


def correct_readout(freqs, model: ReadoutModel) -> np.ndarray:
    """Undo readout errors on observed frequencies (rows of shape (..., 3)).

    The result is linear in the data and may leave [0, 1] for noisy input.
    """
    inverse = np.linalg.inv(model.confusion_matrix())
    return np.asarray(freqs, dtype=float) @ inverse.T


def preparation_state(p_prep: float = 1.0) -> DensityMatrix:
    """|↓↓⟩ with each qubit independently flipped with probability q = 1 − p_prep."""
    return apply_preparation_error(DensityMatrix.basis("dd"), 1.0 - p_prep)


def apply_preparation_error(rho: DensityMatrix, q: float) -> DensityMatrix:
    """Independent bit-flip channel ρ → (1−q)ρ + q X_k ρ X_k on each qubit."""
    if not 0.0 <= q <= 1.0:
        raise ContractViolationError(f"preparation error q={q} outside [0, 1]")
    m = rho.matrix
    for flip in (np.kron(SIGMA_X, SIGMA_I), np.kron(SIGMA_I, SIGMA_X)):
        m = (1.0 - q) * m + q * flip @ m @ flip
    return DensityMatrix(m)


def point_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(index),))


def sample_counts(probs: OutcomeProbs, shots: int, seed: SeedLike) -> Tuple[int, int, int]:
    if shots < 1:
        raise ContractViolationError("shots must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = np.clip(probs.as_array(), 0.0, 1.0)
    counts = rng.multinomial(shots, p / p.sum())
    return tuple(int(n) for n in counts)


def expected_counts(probs: OutcomeProbs, shots: int) -> Tuple[int, int, int]:
    """Largest-remainder rounding of probs·N, summing to N exactly."""
    raw = probs.as_array() * shots
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: shots - counts.sum()]:
        counts[i] += 1
    return tuple(int(n) for n in counts)


def parity_signal(probs) -> float:
    """Parity p_uu + p_dd − p_mid of pooled outcome probabilities."""
    if isinstance(probs, OutcomeProbs):
        values = probs.as_array()
    else:
        values = np.asarray(probs, dtype=float)
    parity = values[..., 0] + values[..., 2] - values[..., 1]
    return float(parity) if np.ndim(parity) == 0 else parity


def pulse_area_from_duration(Omega_c: float, t_pulse: float, t_dead: float) -> float:
    """Analysis pulse area θ = Ω_c (t_pulse − t_dead)."""
    if t_pulse < t_dead:
        raise InvalidCalibrationError(
            f"pulse duration {t_pulse:.3e} s shorter than dead time {t_dead:.3e} s"
        )
    return Omega_c * (t_pulse - t_dead)


def _observe(rho: DensityMatrix, readout: ReadoutModel) -> OutcomeProbs:
    return apply_readout_errors(outcome_probs(rho), readout)


def _record(kind: str, probs: OutcomeProbs, shots: int, seed: int, index: int,
            exact: bool, **setting) -> ScanRecord:
    if exact:
        return ScanRecord(kind, expected_counts(probs, shots), shots,
                          probs=tuple(probs.as_array().tolist()), **setting)
    counts = sample_counts(probs, shots, point_seed(seed, index))
    return ScanRecord(kind, counts, shots, **setting)


def _metadata(kind: str, name: str, seed: int, shots: int, exact: bool,
              readout: ReadoutModel, options: Optional[SimOptions]) -> Dict[str, Any]:
    meta = {
        "kind": kind,
        "sequence": name,
        "seed": int(seed),
        "shots": int(shots),
        "exact": bool(exact),
        "readout": readout.to_dict(),
        "parity_convention": PARITY_CONVENTION,
        "units": {"theta": "rad", "phi": "rad", "tau": "s"},
    }
    if options is not None:
        meta["options"] = asdict(options)
    return meta


def _check_increasing(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ContractViolationError(f"{name} must not be empty")
    if np.any(np.diff(arr) <= 0):
        raise ContractViolationError(f"{name} must be strictly increasing")
    return arr


def phi_scan_from_state(rho: DensityMatrix, theta: float, phi_list: Sequence[float],
                        shots: int, seed: int, readout: Optional[ReadoutModel] = None,
                        exact: bool = False, name: str = "state") -> ScanData:
    """Analysis rotation R(θ, φ) on both qubits followed by pooled readout, per φ."""
    phis = _check_increasing(phi_list, "phi_list")
    readout = readout or ReadoutModel.ideal()

    def point(item):
        index, phi = item
        rotated = collective_rotate(rho, Rotation(theta, phi))
        return _record("phi", _observe(rotated, readout), shots, seed, index, exact,
                       theta=float(theta), phi=float(phi))

    records = map_points(point, list(enumerate(phis)))
    return ScanData(records, _metadata("phi", name, seed, shots, exact, readout, None))


def generate_phi_scan(config: Optional[TrapConfig], seq: PulseSequence, theta: float,
                      phi_list: Sequence[float], shots: int, seed: int,
                      readout: ReadoutModel, options: SimOptions,
                      exact: bool = False) -> ScanData:
    rho = run_sequence(config, seq, options, initial=preparation_state(readout.p_prep))
    data = phi_scan_from_state(rho, theta, phi_list, shots, seed, readout, exact, seq.name)
    data.metadata["options"] = asdict(options)
    logger.info(f"Generated phi scan: theta={theta:.4f} rad, {len(data)} points, N={shots}")
    return data


def generate_tau_scan(config: Optional[TrapConfig],
                      seq_builder: Callable[[float], PulseSequence],
                      tau_list: Sequence[float], shots: int, seed: int,
                      readout: ReadoutModel, options: SimOptions,
                      exact: bool = False) -> ScanData:
    """Sweep the force-pulse duration; no analysis pulse is applied."""
    taus = _check_increasing(tau_list, "tau_list")
    if np.any(taus < 0):
        raise ContractViolationError("tau_list must be non-negative")
    initial = preparation_state(readout.p_prep)

    def point(item):
        index, tau = item
        rho = run_sequence(config, seq_builder(float(tau)), options, initial=initial)
        return _record("tau", _observe(rho, readout), shots, seed, index, exact, tau=float(tau))

    records = map_points(point, list(enumerate(taus)))
    name = seq_builder(float(taus[0])).name
    data = ScanData(records, _metadata("tau", name, seed, shots, exact, readout, options))
    logger.info(f"Generated tau scan: {len(data)} points, N={shots}")
    return data


def uniform_phi_grid(points: int) -> np.ndarray:
    """``points`` azimuths evenly covering one full period [0, 2π)."""
    if points < 1:
        raise ContractViolationError("phi grid needs at least one point")
    return 2.0 * np.pi * np.arange(points) / points
