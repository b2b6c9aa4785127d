"""Command-line surface: calibrate, simulate, scan, tomo, fit-model, report.

Exit codes: 0 success, 1 runtime or analysis failure, 2 usage or config error.
Payloads go to stdout and ``--out``; logs go to stderr as JSON lines.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from . import serialization
from .config import RunConfig, load_config
from .errors import ConfigError, SpinforgeError
from .experiments import (
    echo_sequence,
    fit_tau_scan,
    fitted_model,
    generate_scans,
    parity_bound,
    reconstruct,
    simulate,
)
from .presets import PRESET_NAMES, preset_config
from .report import run_acceptance
from .tomography import infer_state_from_fit
from .trap_physics import carrier_light_shift, gate_phase, loop_period
from .utils.logging import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Raised when a command is invoked with unusable arguments."""


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Path to a JSON or YAML run configuration")
    common.add_argument("--preset", type=str, choices=PRESET_NAMES, help="Built-in run configuration")
    common.add_argument("--seed", type=int, help="Root seed (overrides the configured seed)")
    common.add_argument("--out", type=str, help="Output directory")
    common.add_argument("--mode", choices=("analytic", "fock"), help="Motional treatment")
    common.add_argument("--format", choices=("json", "csv"), help="Scan file format")
    common.add_argument("--log-level", type=str, help="Log level (default SPINFORGE_LOG_LEVEL or INFO)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="spinforge",
        description="Simulate and analyze a two-ion geometric-phase gate",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="Report derived trap geometry")
    sub.add_parser("simulate", parents=[common], help="Simulate the gate output state")
    sub.add_parser("scan", parents=[common], help="Generate synthetic scan data")
    tomo = sub.add_parser("tomo", parents=[common], help="Reconstruct a state from phi scans")
    tomo.add_argument("data", nargs="*", help="Scan files at two or more analysis angles")
    tomo.add_argument("--parity", action="store_true",
                      help="Also bound the fidelity from the parity signal of each scan")
    tomo.add_argument("--drift", action="store_true",
                      help="Absorb a detection gain drifting linearly over each scan")
    fit = sub.add_parser("fit-model", parents=[common], help="Fit the population model to a tau scan")
    fit.add_argument("data", help="Tau scan file")
    sub.add_parser("report", parents=[common], help="Run the acceptance suite")
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def resolve_config(args: argparse.Namespace, default_preset: Optional[str] = None) -> RunConfig:
    """Config file or preset, with command-line overrides applied."""
    if args.config and args.preset:
        raise UsageError("--config and --preset are mutually exclusive")
    if args.config:
        config = load_config(args.config)
    elif args.preset or default_preset:
        config = preset_config(args.preset or default_preset)
    else:
        raise UsageError(f"{args.command} needs --config or --preset")

    updates = {}
    if args.seed is not None:
        updates["scan"] = config.scan.model_copy(update={"seed": args.seed})
    if args.mode is not None:
        updates["sim"] = config.sim.model_copy(update={"mode": args.mode})
    output = {}
    if args.out is not None:
        output["directory"] = args.out
    if args.format is not None:
        output["format"] = args.format
    if output:
        updates["output"] = config.output.model_copy(update=output)
    return config.model_copy(update=updates) if updates else config


def _emit(payload, args: argparse.Namespace, filename: str) -> None:
    sys.stdout.write(serialization.dumps(payload))
    if args.out:
        serialization.write_json(payload, os.path.join(args.out, filename))


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    trap = config.trap_config()
    geometry = config.geometry()
    params = config.force_params()
    payload = {
        "name": config.name,
        "geometry": geometry.to_dict(),
        "standing_wave_integer": round(geometry.p_real),
        "force": {
            "Omega_f": params.Omega_f,
            "delta": params.delta,
            "Delta_c": params.Delta_c,
            "tau_s": params.tau,
            "loop_period_s": loop_period(params.delta),
            "gate_phase_per_pulse": gate_phase(params.Omega_f, params.delta),
        },
        "carrier_light_shift": carrier_light_shift(trap.Omega_c, trap.omega_0, geometry.omega_s + params.delta),
    }
    _emit(payload, args, f"{config.name}_calibration.json")
    logger.info(f"Calibrated {config.name}: eta={geometry.eta:.4f}, p={geometry.p_real:.2f}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    rho, report = simulate(config)
    payload = {
        "name": config.name,
        "sequence": serialization.sequence_to_dict(echo_sequence(config)),
        "rho": serialization.rho_to_dict(rho),
        "report": report.to_dict(),
    }
    _emit(payload, args, f"{config.name}_rho.json")
    return EXIT_OK


def _scan_paths(config: RunConfig, count: int) -> List[str]:
    suffix = config.output.format
    if config.scan.kind == "tau":
        return [os.path.join(config.output.directory, f"{config.name}_tau.{suffix}")]
    return [os.path.join(config.output.directory, f"{config.name}_theta{index}.{suffix}")
            for index in range(count)]


def cmd_scan(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    scans = generate_scans(config)
    paths = _scan_paths(config, len(scans))
    for scan, path in zip(scans, paths):
        serialization.write_scan(scan, path)
        logger.info(f"Wrote {len(scan)}-point {scan.kind} scan to {path}")
    sys.stdout.write(serialization.dumps({"name": config.name, "files": paths}))
    return EXIT_OK


def cmd_tomo(args: argparse.Namespace) -> int:
    if len(args.data) < 2:
        raise UsageError("tomo needs scan files at two or more analysis angles")
    config = resolve_config(args) if (args.config or args.preset) else None
    scans = [serialization.read_scan(path) for path in args.data]
    seed = args.seed if args.seed is not None else 0
    result = reconstruct(scans, config, seed=seed, drift=args.drift)
    summary = {"report": result.report.to_dict(), "null_space_dims": result.null_space_dims}
    if args.parity:
        summary["parity"] = [parity_bound(scan, config).to_dict() for scan in scans]
    sys.stdout.write(serialization.dumps(summary))
    if args.out:
        serialization.write_tomo_result(result, args.out)
        if args.parity:
            serialization.write_json(summary["parity"], os.path.join(args.out, "parity.json"))
    return EXIT_OK


def cmd_fit_model(args: argparse.Namespace) -> int:
    config = resolve_config(args, default_preset="tau-scan")
    scan = serialization.read_scan(args.data)
    fit = fit_tau_scan(scan, config)
    rho, report = infer_state_from_fit(fit, config.sim_options())
    payload = fit.to_dict()
    payload["inferred"] = {"rho": serialization.rho_to_dict(rho), "report": report.to_dict()}
    sys.stdout.write(serialization.dumps(payload))
    if args.out:
        serialization.write_fit_result(fit, scan, fitted_model(fit, config), args.out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = run_acceptance()
    payload = report.to_dict()
    sys.stdout.write(serialization.dumps(payload))
    sys.stdout.write(report.table() + "\n")
    if args.out:
        serialization.write_json(payload, os.path.join(args.out, "acceptance.json"))
    return EXIT_OK if report.passed else EXIT_FAILURE


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "tomo": cmd_tomo,
    "fit-model": cmd_fit_model,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    setup_logging(args.log_level)
    logger.info(f"Starting {args.command}")
    try:
        code = COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        logger.error(f"{args.command}: {exc}")
        for line in getattr(exc, "diagnostics", []):
            logger.error(f"  {line}")
        return EXIT_USAGE
    except SpinforgeError as exc:
        logger.error(f"{args.command} failed: {exc}", exc_info=True)
        return EXIT_FAILURE
    except OSError as exc:
        logger.error(f"{args.command}: {exc}")
        return EXIT_FAILURE
    logger.info(f"Finished {args.command} with exit code {code}")
    return code

