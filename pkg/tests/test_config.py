import json
from pathlib import Path

import pytest

from magnav.config import RuntimeSettings, load_scenario, scenario_from_dict
from magnav.errors import ConfigurationError
from magnav.matching.batch import VITERBI
from magnav.navigation import SensorSpec

SAMPLE = Path(__file__).resolve().parents[1] / "samples" / "scenario_example.json"


def test_sample_scenario_loads():
    config = load_scenario(SAMPLE)
    assert [case.label for case in config.cases] == ["ins-only", "sigma-0.015nT", "sigma-0.15nT"]
    assert not config.cases[0].aided
    assert config.cases[2].sigma == 0.15
    assert config.duration == 3600
    assert config.sensor == SensorSpec.tactical()
    assert config.initial.position_std_m == 500.0
    assert config.match.gate.resolution_aware
    assert config.map_path is None and config.synthetic.seed == 7
    assert config.n_runs == 10 and config.seed == 2024
    assert config.output.csv == Path("montecarlo_rms.csv")


def test_defaults_from_a_minimal_document(scenario_data):
    for key in ("imu", "initial_uncertainty", "matching", "monte_carlo", "cases"):
        scenario_data.pop(key)
    scenario_data["magnetometer"]["sigma_nT"] = 0.2
    config = scenario_from_dict(scenario_data)
    assert config.sensor == SensorSpec.precision()
    assert config.match.gate.resolution_aware
    assert config.algorithm == "pmht"
    assert [(case.label, case.sigma) for case in config.cases] == [("aided", 0.2)]
    assert config.n_runs == 1 and config.prior_floor_m is None


def test_matching_section_splits_into_gate_and_batch_parameters(scenario_data):
    scenario_data["matching"] = {"algorithm": VITERBI, "kappa": 4.0, "resolution_aware": False, "tol": 0.5, "prior_floor_m": 40}
    config = scenario_from_dict(scenario_data)
    assert config.algorithm == VITERBI
    assert config.match.gate.kappa == 4.0 and not config.match.gate.resolution_aware
    assert config.match.tol == 0.5
    assert config.prior_floor_m == 40


@pytest.mark.parametrize(
    "section, value, key",
    [
        ("matching", {"algorithm": "icp"}, "matching.algorithm"),
        ("matching", {"tolerance": 1.0}, "matching"),
        ("ukf", {"alpha": 0.0}, "alpha"),
        ("ukf", {"lambda": 1.0}, "ukf"),
        ("imu", {"preset": "consumer"}, "sensor.preset"),
        ("initial_uncertainty", {"position_std_m": -1.0}, "position_std_m"),
        ("mfv_weighting", {"enabled": True, "w_min": 0.0}, "mfv_weighting"),
        ("monte_carlo", {"n_runs": 0}, "monte_carlo.n_runs"),
        ("magnetometer", {"period_s": 10, "batch_length": 0}, "magnetometer.batch_length"),
        ("map", {"synthetic": {"roughness": 1.0}}, "map.synthetic"),
        ("trajectory", {"start": {"lat": -38.0}, "end": {"lat": -37.0, "lon": 144.0}}, "trajectory.start"),
        ("trajectory", {"start": {"lat": -38.0, "lon": 144.5}}, "trajectory"),
    ],
)
def test_invalid_sections_are_rejected(scenario_data, section, value, key):
    scenario_data[section] = value
    with pytest.raises(ConfigurationError) as info:
        scenario_from_dict(scenario_data)
    if key is not None:
        assert info.value.key == key


@pytest.mark.parametrize(
    "cases",
    [
        [{"label": "a", "sigma_nT": 0.1}, {"label": "a", "sigma_nT": 0.2}],
        [{"label": "a"}],
        [{"label": "a", "sigma_nT": -0.1}],
        [{"sigma_nT": 0.1}],
        [],
    ],
)
def test_invalid_cases_are_rejected(scenario_data, cases):
    scenario_data["cases"] = cases
    with pytest.raises(ConfigurationError):
        scenario_from_dict(scenario_data)


def test_unsupported_schema_version(scenario_data):
    scenario_data["schema_version"] = 2
    with pytest.raises(ConfigurationError, match="unsupported version"):
        scenario_from_dict(scenario_data)


def test_relative_map_path_resolves_against_the_file(tmp_path, scenario_data):
    scenario_data["map"] = {"path": "maps/area.asc"}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_data), encoding="utf-8")
    assert load_scenario(path).map_path == tmp_path / "maps" / "area.asc"


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"trajectory\": ", encoding="utf-8")
    with pytest.raises(ConfigurationError) as info:
        load_scenario(path)
    assert info.value.key == "scenario"
    assert isinstance(info.value, ValueError)


def test_runtime_settings_from_environment(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("MAGNAV_WORKERS", "3")
    monkeypatch.setenv("MAGNAV_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("MAGNAV_OUTPUT_DIR", "results")
    settings = RuntimeSettings.from_env()
    assert settings.workers == 3
    assert settings.log_level == "DEBUG"
    assert settings.output_dir == Path("results")


def test_runtime_settings_defaults(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for name in ("MAGNAV_WORKERS", "MAGNAV_LOG_LEVEL", "MAGNAV_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    settings = RuntimeSettings.from_env()
    assert settings == RuntimeSettings()


def test_runtime_settings_read_a_dotenv_file(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("MAGNAV_WORKERS", raising=False)
    (tmp_path / ".env").write_text("MAGNAV_WORKERS=6\n", encoding="utf-8")
    assert RuntimeSettings.from_env().workers == 6


@pytest.mark.parametrize("value", ["abc", "0", "-2"])
def test_invalid_worker_count(monkeypatch, value):
    monkeypatch.setenv("MAGNAV_WORKERS", value)
    with pytest.raises(ConfigurationError) as info:
        RuntimeSettings.from_env()
    assert info.value.key == "MAGNAV_WORKERS"
