"""Analysis pipeline: harmonic fits, linear inversion, ML projection, model fits.

A φ scan at fixed analysis angle θ is fitted with the orthogonal harmonics
{1, cos φ, sin φ, cos 2φ, sin 2φ} per outcome channel.  The fitted
coefficients of two or more θ values are mapped back to Pauli coefficients
through a design matrix built by exact conjugation, inverted by truncated
SVD, and projected onto physical density matrices with a Cholesky
parametrization ρ = T†T / Tr(T†T).
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize

from .errors import (
    ContractViolationError,
    FitError,
    InputMismatchError,
    InsufficientDataError,
    ReconstructionError,
)
from .gate_sim import SimOptions, build_echo_sequence, model_populations, run_sequence
from .measurement_model import ReadoutModel, ScanData, correct_readout, parity_signal
from .quantum_core import (
    PAULI_BASIS,
    DensityMatrix,
    EntanglementReport,
    Rotation,
    collective_matrix,
    entanglement_report,
    hermitian_eigensystem,
    pauli_compose,
)
from .trap_physics import ForcePulseParams, TrapConfig, derive_geometry, force_phase_from_rabi

logger = logging.getLogger(__name__)

COEFF_NAMES = ("a", "b", "c", "d", "e")
POOLED_CHANNELS = ("uu", "mid")
RESOLVED_CHANNELS = ("uu", "ud", "du")
CHANNEL_PROJECTORS = {
    "uu": np.diag([1.0, 0.0, 0.0, 0.0]),
    "mid": np.diag([0.0, 1.0, 1.0, 0.0]),
    "ud": np.diag([0.0, 1.0, 0.0, 0.0]),
    "du": np.diag([0.0, 0.0, 1.0, 0.0]),
}
LAYOUTS = {"pooled": POOLED_CHANNELS, "resolved": RESOLVED_CHANNELS}
PAULI_INDICES = tuple((i, j) for i in range(4) for j in range(4) if (i, j) != (0, 0))
MIN_DISTINCT_PHI = 5
RECOMMENDED_PHI = 10
RANK_TOL = 1e-10
FOURIER_SAMPLES = 8
SANITY_BAND = (-0.1, 1.1)

ML_STARTS = 8
ML_OPTIONS = {"ftol": 1e-12, "gtol": 1e-12, "maxiter": 10_000}
LOWER = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))

FIT_PARAMS = ("gamma", "delta", "Omega_f", "Delta_c")
FIT_ITERATIONS = 500
DETUNING_LADDER = (1.0, 0.85, 1.15, 0.7, 1.3)


# --------------------------------------------------------------------------
# harmonic fits
# --------------------------------------------------------------------------


def harmonic_design(phis, drift: bool = False) -> np.ndarray:
    """Kernel with columns 1, cos φ, sin φ, cos 2φ, sin 2φ.

    With ``drift`` the five columns are repeated multiplied by a ramp running
    from −1 to 1 in acquisition order, so a gain that changes linearly over
    the scan is absorbed by the extra coefficients.
    """
    phis = np.asarray(phis, dtype=float)
    base = np.column_stack(
        [np.ones_like(phis), np.cos(phis), np.sin(phis), np.cos(2 * phis), np.sin(2 * phis)]
    )
    if not drift:
        return base
    ramp = np.linspace(-1.0, 1.0, phis.size)
    return np.hstack([base, ramp[:, None] * base])


def binomial_variance(p, shots) -> np.ndarray:
    """Per-point variance max(p(1−p), 1/(4N)) / N."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    shots = np.asarray(shots, dtype=float)
    return np.maximum(p * (1.0 - p), 1.0 / (4.0 * shots)) / shots


@dataclass(frozen=True)
class ChannelFit:
    coeffs: np.ndarray
    stderr: np.ndarray
    residual_rms: float
    drift_coeffs: Optional[np.ndarray] = None

    @property
    def harmonic2_amplitude(self) -> float:
        return float(np.hypot(self.coeffs[3], self.coeffs[4]))

    def to_dict(self) -> dict:
        out = {
            "coeffs": dict(zip(COEFF_NAMES, self.coeffs.tolist())),
            "stderr": dict(zip(COEFF_NAMES, self.stderr.tolist())),
            "residual_rms": self.residual_rms,
        }
        if self.drift_coeffs is not None:
            out["drift_coeffs"] = dict(zip(COEFF_NAMES, self.drift_coeffs.tolist()))
        return out


@dataclass(frozen=True)
class HarmonicFit:
    theta: float
    channels: Dict[str, ChannelFit]
    n_points: int

    def coefficient_vector(self, channels: Sequence[str] = POOLED_CHANNELS) -> np.ndarray:
        return np.concatenate([self.channels[name].coeffs for name in channels])

    def model(self, name: str, phis) -> np.ndarray:
        return harmonic_design(phis) @ self.channels[name].coeffs

    def to_dict(self) -> dict:
        return {
            "theta_rad": self.theta,
            "n_points": self.n_points,
            "channels": {name: fit.to_dict() for name, fit in self.channels.items()},
        }


def _weighted_harmonic_fit(phis, y, variance, drift: bool = False) -> ChannelFit:
    g = harmonic_design(phis, drift)
    w = 1.0 / np.asarray(variance, dtype=float)
    normal = g.T @ (g * w[:, None])
    coeffs = np.linalg.solve(normal, g.T @ (w * y))
    residual = y - g @ coeffs
    stderr = np.sqrt(np.diag(np.linalg.inv(normal)))
    n = len(COEFF_NAMES)
    return ChannelFit(
        coeffs[:n], stderr[:n], float(np.sqrt(np.mean(residual**2))),
        drift_coeffs=coeffs[n:] if drift else None,
    )


def _check_phi_coverage(phis: np.ndarray) -> None:
    distinct = np.unique(np.round(np.mod(phis, 2 * np.pi), 12))
    if distinct.size < MIN_DISTINCT_PHI or np.linalg.matrix_rank(harmonic_design(distinct)) < 5:
        raise InsufficientDataError(
            f"harmonic fit needs at least {MIN_DISTINCT_PHI} distinct phi values, got {distinct.size}"
        )
    if distinct.size < RECOMMENDED_PHI:
        logger.warning(f"Only {distinct.size} distinct phi values; at least {RECOMMENDED_PHI} recommended")
    span = phis.max() - phis.min()
    if span < 2 * np.pi * (1.0 - 1.0 / distinct.size) - 1e-9:
        logger.warning(f"phi values span {span:.3f} rad, less than one full period")


def _phi_scan_arrays(scan: ScanData, readout: Optional[ReadoutModel]):
    if scan.kind != "phi":
        raise InputMismatchError(f"expected a phi scan, got a {scan.kind} scan")
    phis = scan.settings
    _check_phi_coverage(phis)
    raw = scan.frequencies()
    values = correct_readout(raw, readout) if readout is not None else raw
    return phis, raw, values


def fit_phi_harmonics(scan: ScanData, readout: Optional[ReadoutModel] = None,
                      drift: bool = False) -> HarmonicFit:
    """Weighted least-squares fit of frequencies {0, 1, 2} for the uu and mid channels.

    ``readout`` undoes readout errors on every point before fitting; weights
    always come from the observed frequencies.  ``drift`` adds a linear gain
    ramp over the acquisition order as nuisance terms (see :func:`harmonic_design`).
    """
    phis, raw, values = _phi_scan_arrays(scan, readout)
    if drift and np.linalg.matrix_rank(harmonic_design(phis, drift=True)) < 2 * len(COEFF_NAMES):
        raise InsufficientDataError(
            f"a drift-corrected harmonic fit needs {2 * len(COEFF_NAMES)} independent points, got {len(phis)}"
        )
    channels = {}
    for idx, name in enumerate(POOLED_CHANNELS):
        variance = binomial_variance(raw[:, idx], scan.shots)
        channels[name] = _weighted_harmonic_fit(phis, values[:, idx], variance, drift)
        fitted = harmonic_design(phis) @ channels[name].coeffs
        if fitted.min() < SANITY_BAND[0] or fitted.max() > SANITY_BAND[1]:
            logger.warning(f"Channel {name} fit leaves the sanity band at theta={scan.theta:.4f}")
    return HarmonicFit(theta=scan.theta, channels=channels, n_points=len(scan))


# --------------------------------------------------------------------------
# linear inversion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignMatrix:
    theta_set: Tuple[float, ...]
    layout: str
    matrix: np.ndarray
    offset: np.ndarray
    svals: np.ndarray
    rank_tol: float

    @property
    def channels(self) -> Tuple[str, ...]:
        return LAYOUTS[self.layout]

    @property
    def rank(self) -> int:
        return int(np.sum(self.svals > self.rank_tol))

    @property
    def null_space_dims(self) -> int:
        return len(PAULI_INDICES) - self.rank

    def null_space(self) -> np.ndarray:
        """Unobservable Pauli-coefficient directions as rows."""
        _, s, vt = np.linalg.svd(self.matrix)
        keep = np.zeros(vt.shape[0], dtype=bool)
        keep[: s.size] = s > self.rank_tol
        return vt[~keep]


def _harmonic_coefficients(samples: np.ndarray) -> np.ndarray:
    """Exact a..e of a degree-2 trigonometric polynomial sampled on a uniform grid."""
    phis = 2 * np.pi * np.arange(samples.size) / samples.size
    return np.array(
        [
            samples.mean(),
            2 * np.mean(samples * np.cos(phis)),
            2 * np.mean(samples * np.sin(phis)),
            2 * np.mean(samples * np.cos(2 * phis)),
            2 * np.mean(samples * np.sin(2 * phis)),
        ]
    )


def _channel_response(theta: float, projector: np.ndarray) -> np.ndarray:
    """Harmonic coefficients of Tr(Π U σ_ij U†) for all 16 Pauli products, shape (16, 5)."""
    phis = 2 * np.pi * np.arange(FOURIER_SAMPLES) / FOURIER_SAMPLES
    samples = np.empty((16, FOURIER_SAMPLES))
    flat = PAULI_BASIS.reshape(16, 4, 4)
    for k, phi in enumerate(phis):
        u = collective_matrix(Rotation(theta, phi))
        heis = u.conj().T @ projector @ u
        samples[:, k] = np.einsum("ab,kba->k", heis, flat).real
    return np.array([_harmonic_coefficients(row) for row in samples])


def build_design_matrix(theta_set: Sequence[float], layout: str = "pooled") -> DesignMatrix:
    """Map from the 15 non-identity Pauli coefficients to fitted harmonic coefficients.

    Rows run over θ, then channel, then (a, b, c, d, e).  The identity column
    is kept separately as ``offset`` since c_00 = 1/4 is fixed by the trace.
    """
    if layout not in LAYOUTS:
        raise ContractViolationError(f"unknown design layout {layout!r}")
    thetas = tuple(float(t) for t in theta_set)
    if not thetas:
        raise ContractViolationError("theta_set must not be empty")
    blocks = []
    for theta in thetas:
        for name in LAYOUTS[layout]:
            response = _channel_response(theta, CHANNEL_PROJECTORS[name])
            blocks.append(response.T)  # (5, 16)
    full = np.vstack(blocks)
    matrix = full[:, 1:]
    svals = np.linalg.svd(matrix, compute_uv=False)
    design = DesignMatrix(
        theta_set=thetas,
        layout=layout,
        matrix=matrix,
        offset=full[:, 0],
        svals=svals,
        rank_tol=RANK_TOL * float(svals[0]) if svals.size else RANK_TOL,
    )
    logger.debug(f"Design matrix for {len(thetas)} thetas ({layout}): rank {design.rank}")
    return design


def invert_to_rho_M(fits: Sequence[HarmonicFit], design: DesignMatrix) -> Tuple[np.ndarray, int]:
    """Minimum-norm Pauli coefficients from fitted harmonics; c_00 pinned to 1/4."""
    if design.layout != "pooled":
        raise InputMismatchError("pooled harmonic fits need a pooled design matrix")
    if len(fits) != len(design.theta_set):
        raise InputMismatchError(
            f"{len(fits)} fits for a design over {len(design.theta_set)} thetas"
        )
    for fit, theta in zip(fits, design.theta_set):
        if abs(fit.theta - theta) > 1e-9:
            raise InputMismatchError(f"fit theta {fit.theta} does not match design theta {theta}")

    y = np.concatenate([fit.coefficient_vector(design.channels) for fit in fits])
    rhs = y - 0.25 * design.offset
    u, s, vt = np.linalg.svd(design.matrix, full_matrices=False)
    inv_s = np.where(s > design.rank_tol, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    x = vt.T @ (inv_s * (u.T @ rhs))

    c = np.zeros((4, 4))
    c[0, 0] = 0.25
    for value, (i, j) in zip(x, PAULI_INDICES):
        c[i, j] = value
    return pauli_compose(c), design.null_space_dims


# --------------------------------------------------------------------------
# maximum-likelihood projection
# --------------------------------------------------------------------------


def t_from_params(t: np.ndarray) -> np.ndarray:
    """Lower-triangular T from 16 reals: 4 diagonal, then (Re, Im) per LOWER entry."""
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = t[:4]
    for k, (r, c) in enumerate(LOWER):
        T[r, c] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return T


def params_from_t(T: np.ndarray) -> np.ndarray:
    t = np.zeros(16)
    t[:4] = np.real(np.diag(T))
    for k, (r, c) in enumerate(LOWER):
        t[4 + 2 * k] = T[r, c].real
        t[5 + 2 * k] = T[r, c].imag
    return t


def rho_from_params(t: np.ndarray) -> np.ndarray:
    T = t_from_params(t)
    a = T.conj().T @ T
    return a / np.trace(a).real


def t_from_rho(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T†T = ρ (ρ positive definite)."""
    flip = np.eye(4)[::-1]
    lower = np.linalg.cholesky(flip @ rho @ flip)
    return (flip @ lower @ flip).conj().T


def frobenius_cost(t: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Σ|ρ(t) − ρ^M|² and its analytic gradient in the 16 T-parameters."""
    T = t_from_params(t)
    a = T.conj().T @ T
    trace = np.trace(a).real
    rho = a / trace
    diff = rho - target
    cost = float(np.sum(np.abs(diff) ** 2))
    g = diff - np.trace(diff @ rho).real * np.eye(4)
    k = g @ T.conj().T
    grad = np.zeros(16)
    scale = 4.0 / trace
    grad[:4] = scale * np.real(np.diag(k))
    for idx, (r, c) in enumerate(LOWER):
        grad[4 + 2 * idx] = scale * k[c, r].real
        grad[5 + 2 * idx] = -scale * k[c, r].imag
    return cost, grad


def simplex_projection(values: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real spectrum onto the probability simplex."""
    v = np.sort(np.asarray(values, dtype=float))[::-1]
    cumulative = np.cumsum(v) - 1.0
    ks = np.arange(1, v.size + 1)
    active = np.nonzero(v - cumulative / ks > 0)[0]
    shift = cumulative[active[-1]] / ks[active[-1]] if active.size else 0.0
    return np.maximum(np.asarray(values, dtype=float) - shift, 0.0)


def eigen_projection(rho_M: np.ndarray) -> np.ndarray:
    """Closest unit-trace PSD matrix in Frobenius norm, by eigenvalue water-filling."""
    values, vectors = hermitian_eigensystem(rho_M)
    projected = simplex_projection(values)
    return (vectors * projected) @ vectors.conj().T


def _start_points(target: np.ndarray, seed: int) -> List[np.ndarray]:
    starts = [params_from_t(0.5 * np.eye(4, dtype=complex))]
    projected = eigen_projection(target)
    regular = (1.0 - 1e-8) * projected + 1e-8 * np.eye(4) / 4.0
    base = params_from_t(t_from_rho(0.5 * (regular + regular.conj().T)))
    starts.append(base)
    rng = np.random.default_rng(seed)
    spread = 0.05 * max(1.0, float(np.max(np.abs(base))))
    for _ in range(ML_STARTS - len(starts)):
        starts.append(base + rng.normal(scale=spread, size=base.size))
    return starts


@dataclass(frozen=True)
class MLStart:
    index: int
    initial_cost: float
    final_cost: float
    status: int
    iterations: int


def ml_project(rho_M, seed: int = 0, return_starts: bool = False):
    """Physical ρ^P = T†T/Tr(T†T) closest to ρ^M in Frobenius norm.

    Runs L-BFGS-B from 8 deterministic starts and keeps the best by
    (cost, start index).  Returns ``(rho_P, cost)``, plus the per-start
    records when ``return_starts`` is set.
    """
    m = np.asarray(rho_M, dtype=complex)
    deviation = float(np.max(np.abs(m - m.conj().T)))
    if deviation > 1e-8:
        logger.warning(f"rho_M deviates from Hermitian by {deviation:.2e}; symmetrizing")
    target = 0.5 * (m + m.conj().T)

    runs = []
    for index, t0 in enumerate(_start_points(target, seed)):
        initial_cost, _ = frobenius_cost(t0, target)
        result = minimize(frobenius_cost, t0, args=(target,), jac=True,
                          method="L-BFGS-B", options=ML_OPTIONS)
        if result.status == 2:
            logger.warning(f"ML start {index} stopped in the line search: {result.message}")
        runs.append((float(result.fun), index, result, initial_cost))

    starts = [
        MLStart(index, initial, cost, int(res.status), int(res.nit))
        for cost, index, res, initial in runs
    ]
    converged = [run for run in runs if run[2].status != 1 and np.isfinite(run[0])]
    if not converged:
        best = min(runs, key=lambda run: (run[0], run[1]))
        raise ReconstructionError(
            "maximum-likelihood projection did not converge from any start",
            best_iterate=rho_from_params(best[2].x),
            cost=best[0],
        )
    cost, index, result, _ = min(converged, key=lambda run: (run[0], run[1]))
    rho_p = DensityMatrix.from_unnormalized(rho_from_params(result.x))
    logger.info(f"ML projection: best start {index}, cost {cost:.3e}")
    if return_starts:
        return rho_p, cost, starts
    return rho_p, cost


# --------------------------------------------------------------------------
# full pipeline
# --------------------------------------------------------------------------


@dataclass
class TomoResult:
    rho_M: np.ndarray
    rho_P: DensityMatrix
    null_space_dims: int
    cost: float
    report: EntanglementReport
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def bar_rows(self) -> List[Tuple[int, int, float, float]]:
        m = self.rho_P.matrix
        return [
            (row, col, float(abs(m[row, col])), float(np.angle(m[row, col])))
            for row in range(4)
            for col in range(4)
        ]


def tomo_pipeline(scans: Sequence[ScanData], readout: Optional[ReadoutModel] = None,
                  seed: int = 0, drift: bool = False) -> TomoResult:
    """Fit, invert, project and score two or more φ scans at distinct θ."""
    thetas = [scan.theta for scan in scans]
    if len(set(np.round(thetas, 12))) < 2:
        raise InsufficientDataError("tomography needs phi scans at two distinct theta values")
    fits = [fit_phi_harmonics(scan, readout, drift) for scan in scans]
    design = build_design_matrix(thetas)
    rho_m, null_dims = invert_to_rho_M(fits, design)
    rho_p, cost, starts = ml_project(rho_m, seed=seed, return_starts=True)
    report = entanglement_report(rho_p)
    diagnostics = {
        "fits": [fit.to_dict() for fit in fits],
        "singular_values": design.svals.tolist(),
        "rank": design.rank,
        "ml_starts": [asdict(start) for start in starts],
        "readout_corrected": readout is not None,
        "drift_corrected": drift,
    }
    logger.info(
        f"Tomography: F={report.fidelity:.4f}, EoF={report.eof:.4f}, "
        f"rank={design.rank}, cost={cost:.3e}"
    )
    return TomoResult(rho_m, rho_p, null_dims, cost, report, diagnostics)


# --------------------------------------------------------------------------
# parity coherence bound
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParityBound:
    abs_C: float
    F_lower_bound: float
    amplitude: float
    theta: float
    sensitivity: float

    def to_dict(self) -> dict:
        return asdict(self)


def parity_sensitivity(theta: float) -> float:
    """Relative 2φ response of the parity, sin²θ; equal to 1 at θ = π/2."""
    return float(np.sin(theta) ** 2)


def coherence_from_parity(scan: ScanData, readout: Optional[ReadoutModel] = None) -> ParityBound:
    """|C| from the 2φ harmonic of the parity signal, and the bound F ≥ 2|C|.

    The parity 2φ amplitude equals 2 sin²θ |C|.
    """
    phis, raw, values = _phi_scan_arrays(scan, readout)
    theta = scan.theta
    if abs(theta - np.pi / 2) > 0.2:
        logger.warning(f"Parity analysis at theta={theta:.3f} rad is far from pi/2")
    sensitivity = parity_sensitivity(theta)
    if sensitivity < 1e-6:
        raise InsufficientDataError("analysis angle carries no parity coherence signal")
    parity = parity_signal(values)
    variance = 4.0 * binomial_variance(raw[:, 1], scan.shots)
    fit = _weighted_harmonic_fit(phis, parity, variance)
    amplitude = fit.harmonic2_amplitude
    abs_c = amplitude / (2.0 * sensitivity)
    return ParityBound(abs_c, 2.0 * abs_c, amplitude, theta, sensitivity)


# --------------------------------------------------------------------------
# population-model fit
# --------------------------------------------------------------------------


@dataclass
class PopulationFit:
    params: Dict[str, float]
    covariance: np.ndarray
    cost: float
    reduced_chi2: float
    trace: List[dict]
    delta_phi: Optional[float] = None

    @property
    def stderr(self) -> Dict[str, float]:
        return dict(zip(FIT_PARAMS, np.sqrt(np.clip(np.diag(self.covariance), 0.0, None)).tolist()))

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "stderr": self.stderr,
            "covariance": self.covariance.tolist(),
            "cost": self.cost,
            "reduced_chi2": self.reduced_chi2,
            "delta_phi": self.delta_phi,
            "trace": self.trace,
        }


def _model_vector(p: np.ndarray, taus: np.ndarray, nbar: float, thermal: bool) -> np.ndarray:
    gamma, delta, omega_f, delta_c = p
    p_uu, p_mid = model_populations(taus, gamma, delta, omega_f, delta_c, nbar, thermal)
    return np.concatenate([p_uu, p_mid])


def _natural_jacobian(fun, p: np.ndarray, scale: np.ndarray) -> np.ndarray:
    base = fun(p)
    jac = np.empty((base.size, p.size))
    for k in range(p.size):
        step = 1e-6 * max(abs(p[k]), scale[k])
        shifted = p.copy()
        shifted[k] += step
        jac[:, k] = (fun(shifted) - base) / step
    return jac


def fit_population_model(scan: ScanData, initial_guess: Dict[str, float],
                         nbar: float = 0.0, include_thermal_coherence_factor: bool = False,
                         trap: Optional[TrapConfig] = None,
                         readout: Optional[ReadoutModel] = None) -> PopulationFit:
    """Levenberg-Marquardt fit of the single-W population model to a τ scan.

    Parameters
    ----------
    scan:
        τ scan with pooled counts (or exact probabilities).
    initial_guess:
        Starting values for gamma, delta, Omega_f, Delta_c (SI/angular).
    trap:
        When given, the force phase Δφ consistent with the fitted Ω_f is
        reported through the calibration chain.
    readout:
        Readout errors undone on every point before fitting.
    """
    if scan.kind != "tau":
        raise InputMismatchError(f"expected a tau scan, got a {scan.kind} scan")
    n_params = len(FIT_PARAMS)
    if len(scan) < 4 * n_params:
        raise InsufficientDataError(
            f"population fit needs at least {4 * n_params} points, got {len(scan)}"
        )
    missing = [name for name in FIT_PARAMS if name not in initial_guess]
    if missing:
        raise ContractViolationError(f"initial guess lacks {missing}")
    guess = np.array([abs(float(initial_guess[name])) for name in FIT_PARAMS])
    if guess[1] == 0:
        raise ContractViolationError("initial detuning guess must be non-zero")

    taus = scan.settings
    period = 2 * np.pi / guess[1]
    if taus.max() - taus.min() < period:
        raise InsufficientDataError("tau span shorter than one loop period at the guessed detuning")

    freqs = scan.frequencies()
    values = correct_readout(freqs, readout) if readout is not None else freqs
    data = np.concatenate([values[:, 0], values[:, 1]])
    sigma = np.sqrt(np.concatenate([binomial_variance(freqs[:, 0], scan.shots),
                                    binomial_variance(freqs[:, 1], scan.shots)]))

    def weighted(p):
        return (_model_vector(p, taus, nbar, include_thermal_coherence_factor) - data) / sigma

    def residuals(u):
        return weighted(u**2)

    trace = []
    best = None
    for index, factor in enumerate(DETUNING_LADDER):
        start = guess.copy()
        start[1] *= factor
        result = least_squares(residuals, np.sqrt(start), method="lm", ftol=1e-10,
                               xtol=1e-12, gtol=1e-12,
                               max_nfev=FIT_ITERATIONS * (n_params + 1))
        entry = {
            "start": index,
            "delta_factor": factor,
            "status": int(result.status),
            "cost": float(2.0 * result.cost),
            "nfev": int(result.nfev),
            "message": str(result.message),
        }
        trace.append(entry)
        logger.debug(f"Population fit start {index}: {entry}")
        if result.status <= 0:
            continue
        if best is None or (entry["cost"], index) < (best[0], best[1]):
            best = (entry["cost"], index, result)

    if best is None:
        raise FitError("population-model fit did not converge from any start", trace=trace)

    cost, _, result = best
    p_hat = result.x**2
    jac = _natural_jacobian(weighted, p_hat, np.maximum(guess, 1e-12))
    covariance = np.linalg.pinv(jac.T @ jac)
    dof = max(1, data.size - n_params)
    params = dict(zip(FIT_PARAMS, p_hat.tolist()))

    delta_phi = None
    if trap is not None:
        geometry = derive_geometry(trap)
        delta_phi = force_phase_from_rabi(params["Omega_f"], geometry.eta, trap.Omega_c, trap.theta_A)

    logger.info(
        f"Population fit: gamma={params['gamma']:.4g} 1/s, "
        f"delta/2pi={params['delta'] / (2 * np.pi):.4g} Hz, chi2/dof={cost / dof:.3f}"
    )
    return PopulationFit(params, covariance, cost, cost / dof, trace, delta_phi)


def infer_state_from_fit(fit: PopulationFit, options: Optional[SimOptions] = None,
                         kind: str = "single_w") -> Tuple[DensityMatrix, EntanglementReport]:
    """Evaluate the echo at the fitted parameters at loop closure τ = 2π/δ."""
    p = fit.params
    params = ForcePulseParams(p["Omega_f"], p["delta"], p["Delta_c"], 2 * np.pi / p["delta"])
    options = (options or SimOptions()).replace(mode="analytic", gamma=p["gamma"])
    rho = run_sequence(None, build_echo_sequence(kind, params), options)
    return rho, entanglement_report(rho)
