"""Configured runs shared by the command line and the acceptance report."""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .errors import InputMismatchError
from .gate_sim import PulseSequence, build_echo_sequence, model_populations, run_sequence
from .measurement_model import ReadoutModel, ScanData, generate_phi_scan, generate_tau_scan, preparation_state
from .quantum_core import DensityMatrix, EntanglementReport, entanglement_report
from .tomography import (
    ParityBound,
    PopulationFit,
    TomoResult,
    coherence_from_parity,
    fit_population_model,
    tomo_pipeline,
)

logger = logging.getLogger(__name__)


def scan_seed(seed: int, index: int) -> int:
    """Independent root seed for the ``index``-th scan of a run."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(index),)).generate_state(1)[0])


def echo_sequence(config: RunConfig) -> PulseSequence:
    return build_echo_sequence(config.sim.sequence, config.force_params())


def simulate(config: RunConfig) -> Tuple[DensityMatrix, EntanglementReport]:
    """Gate output for the configured echo, including preparation error."""
    initial = preparation_state(config.readout.p_prep)
    rho = run_sequence(config.trap_config(), echo_sequence(config), config.sim_options(), initial)
    report = entanglement_report(rho)
    logger.info(f"Simulated {config.sim.sequence}: F={report.fidelity:.4f}, C={report.concurrence:.4f}")
    return rho, report


def generate_scans(config: RunConfig, seed: Optional[int] = None,
                   exact: Optional[bool] = None) -> List[ScanData]:
    """One φ scan per analysis angle, or a single τ scan."""
    seed = config.scan.seed if seed is None else seed
    exact = config.scan.exact if exact is None else exact
    trap = config.trap_config()
    options = config.sim_options()
    readout = config.readout_model()
    params = config.force_params()
    kind = config.sim.sequence

    if config.scan.kind == "tau":
        def builder(tau):
            return build_echo_sequence(kind, params.with_tau(tau))

        return [generate_tau_scan(trap, builder, config.tau_list(), config.scan.shots,
                                  scan_seed(seed, 0), readout, options, exact)]

    seq = build_echo_sequence(kind, params)
    return [
        generate_phi_scan(trap, seq, theta, config.phi_list(), config.scan.shots,
                          scan_seed(seed, index), readout, options, exact)
        for index, theta in enumerate(config.analysis_thetas())
    ]


def correction_model(config: Optional[RunConfig], scans: Sequence[ScanData] = ()):
    """Readout model to undo before analysis, or None when correction is off.

    Without a config the model recorded in the scan metadata is used.
    """
    if config is not None:
        return config.readout_model() if config.readout.correct else None
    recorded = [scan.metadata.get("readout") for scan in scans]
    if not recorded or any(r is None for r in recorded):
        return None
    if any(r != recorded[0] for r in recorded):
        raise InputMismatchError("scans were recorded with different readout models")
    return ReadoutModel(**recorded[0])


def reconstruct(scans: List[ScanData], config: Optional[RunConfig] = None, seed: int = 0,
                drift: bool = False) -> TomoResult:
    return tomo_pipeline(scans, correction_model(config, scans), seed=seed, drift=drift)


def parity_bound(scan: ScanData, config: Optional[RunConfig] = None) -> ParityBound:
    return coherence_from_parity(scan, correction_model(config, [scan]))


def fit_tau_scan(scan: ScanData, config: RunConfig) -> PopulationFit:
    sim = config.sim
    return fit_population_model(
        scan,
        config.initial_guess(),
        nbar=sim.nbar,
        include_thermal_coherence_factor=sim.include_thermal_coherence_factor,
        trap=config.trap_config(),
        readout=correction_model(config, [scan]),
    )


def fitted_model(fit: PopulationFit, config: RunConfig):
    """τ → (p_uu, p_mid) at the fitted parameters."""
    p = fit.params

    def model(taus):
        return model_populations(np.asarray(taus, dtype=float), p["gamma"], p["delta"],
                                 p["Omega_f"], p["Delta_c"], config.sim.nbar,
                                 config.sim.include_thermal_coherence_factor)

    return model
