"""Configuration: process settings from the environment and JSON scenario files."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import find_dotenv, load_dotenv

from .errors import ConfigurationError
from .mapping.synthetic import SyntheticMapSpec
from .matching.batch import ALGORITHMS, PMHT, MatchParams
from .matching.pda import GateParams
from .models import GeoPosition
from .navigation.ins import InitialUncertainty, SensorSpec
from .navigation.integrator import MfvWeighting, UkfParams

LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class RuntimeSettings:
    workers: int = 1
    log_level: Optional[str] = None
    output_dir: Path = Path(".")

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        # Reads process-level settings, honouring a .env file in the working directory
        load_dotenv(find_dotenv(usecwd=True))
        workers_value = os.getenv("MAGNAV_WORKERS", "1")
        try:
            workers = int(workers_value)
        except ValueError as exc:
            raise ConfigurationError(f"expected an integer, got {workers_value!r}", key="MAGNAV_WORKERS") from exc
        if workers < 1:
            raise ConfigurationError(f"must be at least 1, got {workers}", key="MAGNAV_WORKERS")
        return cls(
            workers=workers,
            log_level=os.getenv("MAGNAV_LOG_LEVEL") or None,
            output_dir=Path(os.getenv("MAGNAV_OUTPUT_DIR", ".")),
        )


@dataclass(frozen=True)
class CaseConfig:
    """One curve of an experiment: a magnetometer noise level, or INS only."""

    label: str
    sigma: Optional[float] = None
    aided: bool = True

    def __post_init__(self) -> None:
        if not self.label:
            raise ConfigurationError("case label must not be empty", key="cases.label")
        if self.aided and (self.sigma is None or not self.sigma > 0):
            raise ConfigurationError(f"aided case {self.label!r} needs a positive sigma_nT", key="cases.sigma_nT")


@dataclass(frozen=True)
class OutputPaths:
    csv: Optional[Path] = None
    svg: Optional[Path] = None
    runs_dir: Optional[Path] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one navigation experiment needs.

    Exactly one map source is used: ``map_path`` when set, otherwise the
    synthetic generator sized around the trajectory corridor.
    """

    start: GeoPosition
    end: GeoPosition
    cases: List[CaseConfig]
    speed: float = 22.0
    height: float = 100.0
    duration: Optional[float] = None
    map_path: Optional[Path] = None
    synthetic: SyntheticMapSpec = SyntheticMapSpec()
    map_margin_m: float = 5000.0
    sensor: SensorSpec = field(default_factory=SensorSpec.precision)
    initial: InitialUncertainty = InitialUncertainty()
    mag_period: float = 10.0
    batch_length: int = 30
    algorithm: str = PMHT
    match: MatchParams = MatchParams()
    prior_floor_m: Optional[float] = None
    ukf: UkfParams = UkfParams()
    mfv_weighting: MfvWeighting = MfvWeighting()
    n_runs: int = 1
    seed: int = 0
    output: OutputPaths = OutputPaths()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported version {self.schema_version}", key="schema_version")
        checks = {
            "trajectory.speed_mps": self.speed > 0,
            "magnetometer.period_s": self.mag_period > 0,
            "magnetometer.batch_length": self.batch_length >= 1,
            "monte_carlo.n_runs": self.n_runs >= 1,
            "map.margin_m": self.map_margin_m >= 0,
        }
        for key, ok in checks.items():
            if not ok:
                raise ConfigurationError("value out of range", key=key)
        if self.duration is not None and not self.duration > 0:
            raise ConfigurationError("must be positive", key="trajectory.duration_s")
        if self.prior_floor_m is not None and self.prior_floor_m < 0:
            raise ConfigurationError("must be non-negative", key="matching.prior_floor_m")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"expected one of {ALGORITHMS}, got {self.algorithm!r}", key="matching.algorithm")
        if not self.cases:
            raise ConfigurationError("at least one case is required", key="cases")
        labels = [case.label for case in self.cases]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"case labels must be unique, got {labels}", key="cases")


def _section(data: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigurationError("expected an object", key=key)
    return value


def _geo(data: Any, key: str) -> GeoPosition:
    try:
        return GeoPosition(lat=float(data["lat"]), lon=float(data["lon"]), height=float(data.get("height_m", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"expected {{lat, lon}} in degrees: {exc}", key=key) from exc


def _build(cls, values: Dict[str, Any], key: str):
    # Instantiates a frozen parameter dataclass, naming the section on failure
    known = {item.name for item in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"unknown fields {unknown}", key=key)
    try:
        return cls(**values)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), key=key) from exc


def _synthetic_spec(values: Dict[str, Any]) -> SyntheticMapSpec:
    values = dict(values)
    if "ramp_nT_per_m" in values:
        values["ramp_nT_per_m"] = tuple(float(v) for v in values["ramp_nT_per_m"])
    return _build(SyntheticMapSpec, values, "map.synthetic")


def _cases(data: Dict[str, Any]) -> List[CaseConfig]:
    entries = data.get("cases")
    if entries is None:
        sigma = _section(data, "magnetometer").get("sigma_nT")
        return [CaseConfig(label="aided", sigma=sigma)]
    if not isinstance(entries, list):
        raise ConfigurationError("expected a list", key="cases")
    cases = []
    for index, entry in enumerate(entries):
        try:
            cases.append(CaseConfig(label=str(entry["label"]), sigma=entry.get("sigma_nT"), aided=bool(entry.get("aided", True))))
        except KeyError as exc:
            raise ConfigurationError(f"missing field {exc.args[0]!r}", key=f"cases[{index}]") from exc
    return cases


def scenario_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """Converts a scenario JSON document into a validated ScenarioConfig."""
    if not isinstance(data, dict):
        raise ConfigurationError("scenario must be a JSON object", key="scenario")
    trajectory = _section(data, "trajectory")
    map_section = _section(data, "map")
    magnetometer = _section(data, "magnetometer")
    matching = dict(_section(data, "matching"))
    monte_carlo = _section(data, "monte_carlo")
    output = _section(data, "output")
    if "start" not in trajectory or "end" not in trajectory:
        raise ConfigurationError("start and end positions are required", key="trajectory")

    algorithm = matching.pop("algorithm", PMHT)
    prior_floor = matching.pop("prior_floor_m", None)
    gate_keys = {item.name for item in fields(GateParams)}
    gate_values = {k: matching.pop(k) for k in list(matching) if k in gate_keys}
    gate = _build(GateParams, {"resolution_aware": MatchParams().gate.resolution_aware, **gate_values}, "matching")
    match = _build(MatchParams, {**matching, "gate": gate}, "matching")

    sensor_values = _section(data, "imu") or {"preset": "precision"}
    try:
        sensor = SensorSpec.from_dict(sensor_values)
    except TypeError as exc:
        raise ConfigurationError(str(exc), key="imu") from exc

    map_path = map_section.get("path")
    return ScenarioConfig(
        schema_version=int(data.get("schema_version", SCHEMA_VERSION)),
        start=_geo(trajectory["start"], "trajectory.start"),
        end=_geo(trajectory["end"], "trajectory.end"),
        speed=float(trajectory.get("speed_mps", 22.0)),
        height=float(trajectory.get("height_m", 100.0)),
        duration=trajectory.get("duration_s"),
        map_path=Path(map_path) if map_path else None,
        synthetic=_synthetic_spec(map_section.get("synthetic", {})),
        map_margin_m=float(map_section.get("margin_m", 5000.0)),
        sensor=sensor,
        initial=_build(InitialUncertainty, _section(data, "initial_uncertainty"), "initial_uncertainty"),
        mag_period=float(magnetometer.get("period_s", 10.0)),
        batch_length=int(magnetometer.get("batch_length", 30)),
        algorithm=algorithm,
        match=match,
        prior_floor_m=prior_floor,
        ukf=_build(UkfParams, _section(data, "ukf"), "ukf"),
        mfv_weighting=_build(MfvWeighting, _section(data, "mfv_weighting"), "mfv_weighting"),
        cases=_cases(data),
        n_runs=int(monte_carlo.get("n_runs", 1)),
        seed=int(monte_carlo.get("seed", 0)),
        output=OutputPaths(
            csv=Path(output["csv"]) if output.get("csv") else None,
            svg=Path(output["svg"]) if output.get("svg") else None,
            runs_dir=Path(output["runs_dir"]) if output.get("runs_dir") else None,
        ),
    )


def load_scenario(path: Path) -> ScenarioConfig:
    # Reads and validates a scenario JSON file; relative map paths resolve against the file
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}", key="scenario") from exc
    config = scenario_from_dict(data)
    if config.map_path is not None and not config.map_path.is_absolute():
        config = replace(config, map_path=path.parent / config.map_path)
    LOGGER.debug("Loaded scenario %s with %d cases", path, len(config.cases))
    return config
