import json
import os
import sys

# Ensure project root is on sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import numpy as np
import pytest
import yaml

from spinforge.config import load_config, parse_config, read_config_file, validate_run_config
from spinforge.errors import ConfigError
from spinforge.presets import PRESET_NAMES, preset_config, preset_dict

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "config")
TWO_PI = 2 * np.pi


def minimal():
    return {"trap": {"omega_c_hz": 500e3}, "force": {"delta_hz": 22.7e3}}


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_validate(name):
    assert validate_run_config(preset_dict(name)) == []
    assert preset_config(name).name == name


def test_unknown_preset():
    with pytest.raises(ConfigError) as excinfo:
        preset_dict("bogus")
    assert any("tomography" in line for line in excinfo.value.diagnostics)


def test_presets_are_distinct_runs():
    assert set(PRESET_NAMES) == {"tau-scan", "parity-scan", "tomography"}
    bodies = [{k: v for k, v in preset_dict(name).items() if k != "name"} for name in PRESET_NAMES]
    assert all(a != b for i, a in enumerate(bodies) for b in bodies[i + 1:])


def test_shipped_configs_load():
    a = load_config(os.path.join(CONFIG_DIR, "config_a.json"))
    b = load_config(os.path.join(CONFIG_DIR, "config_b.yaml"))
    assert a.geometry().eta == pytest.approx(0.133, abs=0.002)
    assert b.geometry().eta == pytest.approx(0.128, abs=0.002)
    assert load_config(os.path.join(CONFIG_DIR, "tau_scan.json")).scan.kind == "tau"


def test_json_and_yaml_agree(tmp_path):
    data = minimal()
    json_path = tmp_path / "run.json"
    yaml_path = tmp_path / "run.yml"
    json_path.write_text(json.dumps(data))
    yaml_path.write_text(yaml.safe_dump(data))
    assert load_config(str(json_path)) == load_config(str(yaml_path))


def test_missing_field_is_reported():
    data = minimal()
    del data["trap"]["omega_c_hz"]
    diagnostics = validate_run_config(data)
    assert any(line.startswith("trap.omega_c_hz") for line in diagnostics), diagnostics
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data, source="test")
    assert excinfo.value.diagnostics == diagnostics


def test_unknown_keys_and_bad_values_are_rejected():
    data = minimal()
    data["sim"] = {"gamma_per_ms": -1.0, "colour": "blue"}
    diagnostics = validate_run_config(data)
    assert any(line.startswith("sim.gamma_per_ms") for line in diagnostics)
    assert any(line.startswith("sim.colour") for line in diagnostics)
    data = minimal()
    data["force"]["delta_hz"] = 0.0
    assert validate_run_config(data), "Zero detuning should not validate"


def test_polarization_past_quarter_turn_is_a_config_error():
    data = minimal()
    data["trap"]["beta_deg"] = 108.0
    assert not validate_run_config(data)
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data, source="test")
    assert "beta" in excinfo.value.diagnostics[0]


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        read_config_file(str(tmp_path / "run.toml"))


def test_pulse_durations_map_to_analysis_angles():
    data = minimal()
    data["scan"] = {"pulse_durations_us": [2.8, 3.4], "dead_time_us": 0.1}
    thetas = parse_config(data).analysis_thetas()
    assert np.array(thetas) / np.pi == pytest.approx([0.54, 0.66])


def test_derived_force_parameters():
    config = parse_config(minimal())
    params = config.force_params()
    assert params.Delta_c / TWO_PI == pytest.approx(2157.0, rel=2e-3)
    assert params.Omega_f == pytest.approx(config.geometry().Omega_f)
    assert params.tau == pytest.approx(1 / 22.7e3)
    guess = config.initial_guess()
    assert set(guess) == {"gamma", "delta", "Omega_f", "Delta_c"}


def test_settings_convert_units():
    config = preset_config("tau-scan")
    assert config.sim_options().gamma == pytest.approx(5.4e3)
    assert config.tau_list()[-1] == pytest.approx(240e-6)
    assert len(config.phi_list()) == 36
    assert config.readout_model().eps_bright == 0.05
