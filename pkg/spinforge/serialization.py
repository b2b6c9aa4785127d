"""On-disk formats for density matrices, sequences, scans, fits and reconstructions.

JSON payloads are written with sorted keys and fixed indentation so reruns
with the same configuration and seed produce byte-identical files.  CSV
files start with ``#`` comment lines naming the columns and their units.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from .errors import ContractViolationError, InputMismatchError
from .gate_sim import CarrierRotation, ForcePulse, PulseSequence, Wait
from .measurement_model import OUTCOMES, ScanData, ScanRecord
from .quantum_core import BASIS_LABELS, DensityMatrix
from .trap_physics import ForcePulseParams

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ("kind", "theta_rad", "phi_rad", "tau_s", "n_uu", "n_mid", "n_dd", "n_shots")
EXACT_COLUMNS = ("p_uu", "p_mid", "p_dd")
BAR_COLUMNS = ("row", "col", "abs", "phase_rad")
RESIDUAL_COLUMNS = ("tau_s", "p_uu_data", "p_mid_data", "p_uu_model", "p_mid_model",
                    "resid_uu", "resid_mid")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def dumps(payload: Any) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


def write_json(payload: Any, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(payload))
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _write_csv(path: str, fieldnames: Iterable[str], rows: Iterable[dict],
               header: Optional[List[str]] = None) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fieldnames = list(fieldnames)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header or []:
            f.write(f"# {line}\n")
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})
    logger.debug(f"Wrote {path}")
    return path


def _read_csv(path: str):
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    comments = [line[2:] for line in lines if line.startswith("# ")]
    body = [line for line in lines if not line.startswith("#")]
    return comments, list(csv.DictReader(body))


# --------------------------------------------------------------------------
# density matrices and sequences
# --------------------------------------------------------------------------


def rho_to_dict(rho) -> Dict[str, Any]:
    """Density matrix as nested [re, im] pairs in basis order."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    return {
        "basis": list(BASIS_LABELS),
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in m],
    }


def rho_from_dict(data: Dict[str, Any], validate: bool = True):
    if list(data.get("basis", BASIS_LABELS)) != list(BASIS_LABELS):
        raise InputMismatchError(f"unexpected basis order {data.get('basis')}")
    entries = np.asarray(data["entries"], dtype=float)
    if entries.shape != (4, 4, 2):
        raise ContractViolationError(f"density matrix entries have shape {entries.shape}")
    m = entries[..., 0] + 1j * entries[..., 1]
    return DensityMatrix.from_unnormalized(m) if validate else m


def sequence_to_dict(seq: PulseSequence) -> Dict[str, Any]:
    ops = []
    for op in seq.ops:
        if isinstance(op, CarrierRotation):
            ops.append({"op": "carrier", "theta_rad": op.theta, "phi_rad": op.phi})
        elif isinstance(op, ForcePulse):
            p = op.params
            ops.append({"op": "force", "Omega_f": p.Omega_f, "delta": p.delta,
                        "Delta_c": p.Delta_c, "tau_s": p.tau})
        elif isinstance(op, Wait):
            ops.append({"op": "wait", "t_s": op.t})
    return {"name": seq.name, "ops": ops}


def sequence_from_dict(data: Dict[str, Any]) -> PulseSequence:
    ops = []
    for item in data["ops"]:
        tag = item.get("op")
        if tag == "carrier":
            ops.append(CarrierRotation(item["theta_rad"], item.get("phi_rad", 0.0)))
        elif tag == "force":
            ops.append(ForcePulse(ForcePulseParams(item["Omega_f"], item["delta"],
                                                   item.get("Delta_c", 0.0), item["tau_s"])))
        elif tag == "wait":
            ops.append(Wait(item["t_s"]))
        else:
            raise ContractViolationError(f"unknown pulse op tag {tag!r}")
    return PulseSequence(tuple(ops), name=data.get("name", "custom"))


# --------------------------------------------------------------------------
# scans
# --------------------------------------------------------------------------


def _num(value) -> str:
    return "" if value is None else repr(float(value))


def _scan_rows(scan: ScanData) -> List[dict]:
    rows = []
    for r in scan.records:
        row = {
            "kind": r.kind,
            "theta_rad": _num(r.theta),
            "phi_rad": _num(r.phi),
            "tau_s": _num(r.tau),
            "n_uu": r.counts[0],
            "n_mid": r.counts[1],
            "n_dd": r.counts[2],
            "n_shots": r.shots,
        }
        if r.probs is not None:
            row.update({name: repr(float(p)) for name, p in zip(EXACT_COLUMNS, r.probs)})
        rows.append(row)
    return rows


def write_scan_csv(scan: ScanData, path: str) -> str:
    columns = SCAN_COLUMNS + (EXACT_COLUMNS if scan.is_exact else ())
    header = [
        "theta_rad, phi_rad: analysis rotation; tau_s: force duration in seconds",
        "n_uu, n_mid, n_dd: pooled counts (both up, one up, both down) out of n_shots",
        f"metadata: {json.dumps(_jsonable(scan.metadata), sort_keys=True)}",
    ]
    if scan.is_exact:
        header.insert(2, "p_uu, p_mid, p_dd: exact outcome probabilities")
    return _write_csv(path, columns, _scan_rows(scan), header)


def _optional(row: dict, key: str) -> Optional[float]:
    value = row.get(key, "")
    return float(value) if value not in ("", None) else None


def _record_from_row(row: dict) -> ScanRecord:
    probs = None
    if row.get("p_uu") not in ("", None):
        probs = tuple(float(row[name]) for name in EXACT_COLUMNS)
    return ScanRecord(
        kind=row["kind"],
        counts=(int(row["n_uu"]), int(row["n_mid"]), int(row["n_dd"])),
        shots=int(row["n_shots"]),
        theta=_optional(row, "theta_rad"),
        phi=_optional(row, "phi_rad"),
        tau=_optional(row, "tau_s"),
        probs=probs,
    )


def read_scan_csv(path: str) -> ScanData:
    comments, rows = _read_csv(path)
    missing = [c for c in SCAN_COLUMNS if rows and c not in rows[0]]
    if missing:
        raise ContractViolationError(f"{path}: scan file lacks columns {missing}")
    metadata = {}
    for line in comments:
        if line.startswith("metadata: "):
            metadata = json.loads(line[len("metadata: "):])
    return ScanData(tuple(_record_from_row(row) for row in rows), metadata)


def scan_to_dict(scan: ScanData) -> Dict[str, Any]:
    return {
        "metadata": scan.metadata,
        "outcomes": list(OUTCOMES),
        "records": [
            {
                "kind": r.kind,
                "theta_rad": r.theta,
                "phi_rad": r.phi,
                "tau_s": r.tau,
                "counts": list(r.counts),
                "shots": r.shots,
                "probs": list(r.probs) if r.probs is not None else None,
            }
            for r in scan.records
        ],
    }


def scan_from_dict(data: Dict[str, Any]) -> ScanData:
    records = tuple(
        ScanRecord(
            kind=item["kind"],
            counts=tuple(int(n) for n in item["counts"]),
            shots=int(item["shots"]),
            theta=item.get("theta_rad"),
            phi=item.get("phi_rad"),
            tau=item.get("tau_s"),
            probs=tuple(item["probs"]) if item.get("probs") is not None else None,
        )
        for item in data["records"]
    )
    return ScanData(records, data.get("metadata", {}))


def write_scan(scan: ScanData, path: str) -> str:
    if path.endswith(".json"):
        return write_json(scan_to_dict(scan), path)
    return write_scan_csv(scan, path)


def read_scan(path: str) -> ScanData:
    if path.endswith(".json"):
        return scan_from_dict(read_json(path))
    return read_scan_csv(path)


# --------------------------------------------------------------------------
# analysis results
# --------------------------------------------------------------------------


def tomo_result_to_dict(result) -> Dict[str, Any]:
    return {
        "rho_M": rho_to_dict(result.rho_M),
        "rho_P": rho_to_dict(result.rho_P),
        "null_space_dims": result.null_space_dims,
        "cost": result.cost,
        "report": result.report.to_dict(),
        "diagnostics": result.diagnostics,
    }


def write_tomo_result(result, directory: str, stem: str = "tomo") -> Dict[str, str]:
    json_path = write_json(tomo_result_to_dict(result), os.path.join(directory, f"{stem}.json"))
    rows = [dict(zip(BAR_COLUMNS, row)) for row in result.bar_rows()]
    header = ["reconstructed rho_P: |rho[row, col]| and arg rho[row, col]",
              f"basis order: {', '.join(BASIS_LABELS)}"]
    bars_path = _write_csv(os.path.join(directory, f"{stem}_bars.csv"), BAR_COLUMNS, rows, header)
    return {"json": json_path, "bars": bars_path}


def write_fit_result(fit, scan: ScanData, model, directory: str, stem: str = "fit") -> Dict[str, str]:
    """Fit JSON plus a residual CSV; ``model`` maps τ values to (p_uu, p_mid)."""
    json_path = write_json(fit.to_dict(), os.path.join(directory, f"{stem}.json"))
    taus = scan.settings
    data = scan.frequencies()
    p_uu, p_mid = model(taus)
    rows = [
        {
            "tau_s": repr(float(t)),
            "p_uu_data": repr(float(d[0])),
            "p_mid_data": repr(float(d[1])),
            "p_uu_model": repr(float(mu)),
            "p_mid_model": repr(float(mm)),
            "resid_uu": repr(float(d[0] - mu)),
            "resid_mid": repr(float(d[1] - mm)),
        }
        for t, d, mu, mm in zip(taus, data, p_uu, p_mid)
    ]
    header = ["population-model fit: data and model in pooled outcome probabilities"]
    csv_path = _write_csv(os.path.join(directory, f"{stem}_residuals.csv"), RESIDUAL_COLUMNS, rows, header)
    return {"json": json_path, "residuals": csv_path}
