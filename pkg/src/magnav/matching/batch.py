"""Batch containers shared by the PMHT and Viterbi map matchers."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError
from ..models import MagMeasurement, PositionFix, PriorPosition
from .pda import GateParams

LOGGER = logging.getLogger(__name__)

PMHT = "pmht"
VITERBI = "viterbi"
ALGORITHMS = (PMHT, VITERBI)


@dataclass(frozen=True)
class MatchParams:
    """Knobs for both batch matchers.

    ``floor_fraction`` sets the motion noise floor to (fraction * cell_size)^2
    per step; ``velocity_noise`` is the constant-velocity random walk
    intensity in m^2/s^3 and ``velocity_std`` the initial INS velocity error
    (m/s) used by PMHT-MM.
    """

    gate: GateParams = GateParams(resolution_aware=True)
    tol: float = 1.0
    max_iters: int = 20
    near_optimal_margin: float = 3.0
    floor_fraction: float = 0.25
    velocity_noise: float = 1e-4
    velocity_std: float = 0.1

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ConfigurationError(f"must be positive, got {self.tol}", key="tol")
        if self.max_iters < 1:
            raise ConfigurationError(f"must be at least 1, got {self.max_iters}", key="max_iters")
        if self.near_optimal_margin < 0:
            raise ConfigurationError("must be non-negative", key="near_optimal_margin")
        if not self.floor_fraction > 0:
            raise ConfigurationError("must be positive", key="floor_fraction")
        if self.velocity_noise < 0:
            raise ConfigurationError("must be non-negative", key="velocity_noise")
        if not self.velocity_std > 0:
            raise ConfigurationError("must be positive", key="velocity_std")


@dataclass(frozen=True, eq=False)
class Batch:
    """m magnetometer readings with the INS prior of the sensor position at each one.

    ``displacements[k]`` and ``motion_covs[k]`` describe the INS motion from
    epoch k to k + 1, so both hold m - 1 entries.
    """

    measurements: List[MagMeasurement]
    priors: List[PriorPosition]
    displacements: np.ndarray
    motion_covs: np.ndarray

    def __post_init__(self) -> None:
        m = len(self.measurements)
        if m < 1:
            raise ConfigurationError("a batch needs at least one measurement", key="measurements")
        if len(self.priors) != m:
            raise ConfigurationError(f"{len(self.priors)} priors for {m} measurements", key="priors")
        times = np.array([meas.time for meas in self.measurements])
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("measurement times must be strictly increasing", key="measurements")
        displacements = np.asarray(self.displacements, dtype=float).reshape(max(m - 1, 0), 2)
        motion_covs = np.asarray(self.motion_covs, dtype=float).reshape(max(m - 1, 0), 2, 2)
        object.__setattr__(self, "measurements", list(self.measurements))
        object.__setattr__(self, "priors", list(self.priors))
        object.__setattr__(self, "displacements", displacements)
        object.__setattr__(self, "motion_covs", motion_covs)

    def __len__(self) -> int:
        return len(self.measurements)

    @property
    def times(self) -> np.ndarray:
        return np.array([meas.time for meas in self.measurements])

    @classmethod
    def from_epochs(
        cls,
        measurements: Sequence[MagMeasurement],
        priors: Sequence[PriorPosition],
        velocity_covs: Optional[Sequence[np.ndarray]] = None,
    ) -> "Batch":
        """Derives the motion terms from consecutive prior means.

        With ``velocity_covs`` (one 2x2 per epoch) each step gets the INS
        velocity covariance scaled by dt^2, otherwise a zero matrix.
        """
        means = np.array([prior.mean for prior in priors]).reshape(len(priors), 2)
        displacements = np.diff(means, axis=0)
        steps = max(len(priors) - 1, 0)
        motion_covs = np.zeros((steps, 2, 2))
        if velocity_covs is not None:
            dts = np.diff([meas.time for meas in measurements])
            for k in range(steps):
                motion_covs[k] = np.asarray(velocity_covs[k + 1], dtype=float) * dts[k] ** 2
        return cls(list(measurements), list(priors), displacements, motion_covs)

    def step_covariances(self, cell_size: float, floor_fraction: float) -> np.ndarray:
        # Motion covariance of each step with the per-step noise floor added
        floor = (floor_fraction * cell_size) ** 2
        return self.motion_covs + floor * np.eye(2)[None, :, :]

    def translated(self, offset: np.ndarray) -> "Batch":
        # The same batch with every prior shifted by a constant local offset
        offset = np.asarray(offset, dtype=float).reshape(2)
        priors = [PriorPosition(prior.mean + offset, prior.cov) for prior in self.priors]
        return Batch(self.measurements, priors, self.displacements, self.motion_covs)


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Outcome of one batch match.

    ``fix`` is None when no epoch gated a candidate; the integrator then
    coasts. ``smoothed_track`` holds one (north, east) row per epoch.
    ``stalled`` marks an EM loop cut short by a drop in its objective.
    """

    algorithm: str
    fix: Optional[PositionFix]
    smoothed_track: np.ndarray
    iterations: int
    converged: bool
    candidate_counts: List[int] = field(default_factory=list)
    objective_history: List[float] = field(default_factory=list)
    stalled: bool = False

    @property
    def has_fix(self) -> bool:
        return self.fix is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "fix": self.fix.to_dict() if self.fix is not None else None,
            "iterations": self.iterations,
            "converged": self.converged,
            "stalled": self.stalled,
            "candidate_counts": list(self.candidate_counts),
            "smoothed_track_m": [[float(v) for v in row] for row in self.smoothed_track],
            "objective_history": [float(v) for v in self.objective_history],
        }


def batch_from_dict(data: Any) -> Batch:
    """Builds a Batch from the JSON document used by ``magnav match``.

    Accepts either a bare list of epochs or an object with ``epochs`` and an
    optional ``motion`` block holding ``displacements_m`` and ``covs_m2``.
    Without a motion block the displacements come from the prior means.
    """
    epochs = data if isinstance(data, list) else data.get("epochs")
    if not isinstance(epochs, list) or not epochs:
        raise ConfigurationError("batch needs a non-empty list of epochs", key="epochs")
    measurements: List[MagMeasurement] = []
    priors: List[PriorPosition] = []
    for index, epoch in enumerate(epochs):
        try:
            measurements.append(
                MagMeasurement(value=float(epoch["s_nT"]), sigma=float(epoch["sigma_nT"]), time=float(epoch["t"]))
            )
            priors.append(PriorPosition(np.array(epoch["prior_mean_m"]), np.array(epoch["prior_cov_m2"])))
        except KeyError as exc:
            raise ConfigurationError(f"missing field {exc.args[0]!r}", key=f"epochs[{index}]") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc), key=f"epochs[{index}]") from exc
    motion = data.get("motion") if isinstance(data, dict) else None
    if motion is None:
        return Batch.from_epochs(measurements, priors)
    try:
        displacements = np.asarray(motion["displacements_m"], dtype=float)
        motion_covs = np.asarray(motion.get("covs_m2", np.zeros((len(epochs) - 1, 2, 2))), dtype=float)
        return Batch(measurements, priors, displacements, motion_covs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid motion block: {exc}", key="motion") from exc


def load_batch(path: str | Path) -> Batch:
    # Reads a batch JSON file from disk
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}", key="batch") from exc
    batch = batch_from_dict(data)
    LOGGER.debug("Loaded %d-epoch batch from %s", len(batch), path)
    return batch
