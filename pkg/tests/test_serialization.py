import csv
import json
import os
import sys

# Ensure project root is on sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest

from spinforge import serialization
from spinforge.errors import ContractViolationError, InputMismatchError
from spinforge.gate_sim import build_echo_sequence
from spinforge.measurement_model import phi_scan_from_state, uniform_phi_grid
from spinforge.quantum_core import DensityMatrix, bell_state
from spinforge.tomography import tomo_pipeline
from spinforge.trap_physics import ForcePulseParams, loop_period

TWO_PI = 2 * np.pi


def sample_scan(exact=False):
    rho = DensityMatrix(0.9 * bell_state(0.4).matrix + 0.1 * np.eye(4) / 4)
    return phi_scan_from_state(rho, 0.54 * np.pi, uniform_phi_grid(12), 200, 5, exact=exact)


@pytest.mark.parametrize("suffix", ["csv", "json"])
@pytest.mark.parametrize("exact", [False, True])
def test_scan_files_read_back(tmp_path, suffix, exact):
    scan = sample_scan(exact)
    path = serialization.write_scan(scan, str(tmp_path / f"scan.{suffix}"))
    loaded = serialization.read_scan(path)
    assert loaded.records == scan.records
    assert loaded.metadata["seed"] == 5
    assert loaded.metadata["readout"] == scan.metadata["readout"]


def test_scan_csv_layout(tmp_path):
    path = serialization.write_scan_csv(sample_scan(), str(tmp_path / "scan.csv"))
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0].startswith("# ")
    header = next(line for line in lines if not line.startswith("#"))
    assert header.split(",") == list(serialization.SCAN_COLUMNS)


def test_scan_csv_missing_columns(tmp_path):
    path = tmp_path / "broken.csv"
    path.write_text("kind,phi_rad,n_uu\nphi,0.0,1\n")
    with pytest.raises(ContractViolationError):
        serialization.read_scan_csv(str(path))


def test_json_is_stable(tmp_path):
    scan = sample_scan()
    first = serialization.write_scan(scan, str(tmp_path / "a.json"))
    second = serialization.write_scan(scan, str(tmp_path / "b.json"))
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()
    assert serialization.dumps({"b": np.float64(1.5), "a": np.arange(2)}) == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": 1.5\n}\n'


def test_density_matrix_dict():
    rho = bell_state(1.15 * np.pi)
    data = serialization.rho_to_dict(rho)
    assert data["basis"] == ["uu", "ud", "du", "dd"]
    assert data["entries"][0][3] == pytest.approx([np.cos(1.15 * np.pi) / 2, -np.sin(1.15 * np.pi) / 2])
    assert serialization.rho_from_dict(json.loads(json.dumps(data))).allclose(rho, atol=1e-15)
    data["basis"] = ["dd", "du", "ud", "uu"]
    with pytest.raises(InputMismatchError):
        serialization.rho_from_dict(data)


def test_sequence_dict():
    delta = TWO_PI * 22.7e3
    seq = build_echo_sequence("double_w", ForcePulseParams(0.7 * delta, delta, TWO_PI * 2e3, loop_period(delta)))
    data = serialization.sequence_to_dict(seq)
    assert [op["op"] for op in data["ops"]] == ["carrier", "force", "carrier", "force", "carrier"]
    restored = serialization.sequence_from_dict(json.loads(json.dumps(data)))
    assert serialization.sequence_to_dict(restored) == data
    with pytest.raises(ContractViolationError):
        serialization.sequence_from_dict({"ops": [{"op": "laser"}]})


def test_tomography_outputs(tmp_path):
    scans = [phi_scan_from_state(bell_state(0.5), t, uniform_phi_grid(12), 100, 0, exact=True)
             for t in (0.54 * np.pi, 0.66 * np.pi)]
    paths = serialization.write_tomo_result(tomo_pipeline(scans), str(tmp_path))
    payload = serialization.read_json(paths["json"])
    assert payload["null_space_dims"] == 6
    assert payload["report"]["fidelity"] == pytest.approx(1.0, abs=1e-6)
    with open(paths["bars"], encoding="utf-8") as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    assert len(rows) == 16
    assert float(rows[3]["abs"]) == pytest.approx(0.5, abs=1e-6)
