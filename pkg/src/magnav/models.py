"""Core data models shared by the mapping, matching and navigation modules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

# Layout of the navigation error state and its covariance
NAV_STATE_DIM = 13
POS = slice(0, 2)
VEL = slice(2, 4)
ATT = slice(4, 7)
ACCEL_BIAS = slice(7, 10)
GYRO_BIAS = slice(10, 13)
STATE_LABELS = (
    "north", "east", "v_north", "v_east", "roll", "pitch", "yaw",
    "accel_bias_x", "accel_bias_y", "accel_bias_z",
    "gyro_bias_x", "gyro_bias_y", "gyro_bias_z",
)


@dataclass(frozen=True)
class GeoPosition:
    """Geodetic position in degrees with height in metres."""

    lat: float
    lon: float
    height: float = 0.0

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0) or not math.isfinite(self.lat):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0) or not math.isfinite(self.lon):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class MagMeasurement:
    """One scalar magnetometer reading s_k with its noise level."""

    value: float
    sigma: float
    time: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("measurement value must be finite")
        if not self.sigma > 0:
            raise ValueError(f"measurement sigma must be positive, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class PriorPosition:
    """Gaussian prior of the sensor location in local map metres (north, east)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-12):
            raise ValueError("prior covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("prior covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True, eq=False)
class PositionFix:
    """Map-matching position estimate handed to the integration filter."""

    mean: np.ndarray
    cov: np.ndarray
    time: float
    n_candidates: int
    mfv_weight: Optional[float] = None

    def to_dict(self) -> dict:
        # Serialises the fix for JSON output on the command line
        payload = {
            "time": self.time,
            "mean_m": [float(v) for v in self.mean],
            "cov_m2": [[float(v) for v in row] for row in self.cov],
            "n_candidates": int(self.n_candidates),
        }
        if self.mfv_weight is not None:
            payload["mfv_weight"] = float(self.mfv_weight)
        return payload


@dataclass(frozen=True, eq=False)
class ImuSample:
    """Specific force and angular rate in the body frame."""

    specific_force: np.ndarray
    angular_rate: np.ndarray
    time: float


@dataclass(frozen=True, eq=False)
class NavState:
    """Estimated navigation state X_k and its error covariance.

    The covariance follows the NAV_STATE_DIM layout: local north/east
    position, horizontal velocity, roll/pitch/yaw, accelerometer bias and
    gyroscope bias. The vertical channel is held at truth height.
    """

    position: GeoPosition
    velocity: np.ndarray
    attitude: np.ndarray
    accel_bias: np.ndarray
    gyro_bias: np.ndarray
    cov: np.ndarray
    time: float

    def __post_init__(self) -> None:
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (NAV_STATE_DIM, NAV_STATE_DIM):
            raise ValueError(f"covariance must be {NAV_STATE_DIM}x{NAV_STATE_DIM}, got {cov.shape}")
        for name in ("velocity", "attitude", "accel_bias", "gyro_bias"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        object.__setattr__(self, "cov", cov)

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[POS, POS]
