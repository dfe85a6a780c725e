"""Geodetic to local tangent-plane conversion."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..models import GeoPosition

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


def meridian_radius(lat_deg: float) -> float:
    # Radius of curvature in the meridian at the given latitude
    s = math.sin(math.radians(lat_deg))
    return WGS84_A * (1.0 - WGS84_E2) / (1.0 - WGS84_E2 * s * s) ** 1.5


def transverse_radius(lat_deg: float) -> float:
    # Radius of curvature in the prime vertical at the given latitude
    s = math.sin(math.radians(lat_deg))
    return WGS84_A / math.sqrt(1.0 - WGS84_E2 * s * s)


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular north/east plane anchored at an origin on the WGS-84 ellipsoid.

    Scale factors are frozen at the origin, so the mapping is affine and its
    inverse is exact up to floating point.
    """

    origin_lat: float
    origin_lon: float
    metres_per_deg_north: float
    metres_per_deg_east: float

    @classmethod
    def at(cls, lat: float, lon: float) -> "LocalFrame":
        north_scale = math.radians(1.0) * meridian_radius(lat)
        east_scale = math.radians(1.0) * transverse_radius(lat) * math.cos(math.radians(lat))
        return cls(origin_lat=lat, origin_lon=lon, metres_per_deg_north=north_scale, metres_per_deg_east=east_scale)

    def to_local(self, position: GeoPosition) -> np.ndarray:
        # Returns (north, east) metres relative to the origin
        d_lon = (position.lon - self.origin_lon + 180.0) % 360.0 - 180.0
        return np.array(
            [
                (position.lat - self.origin_lat) * self.metres_per_deg_north,
                d_lon * self.metres_per_deg_east,
            ]
        )

    def from_local(self, north_east: np.ndarray, height: float = 0.0) -> GeoPosition:
        north, east = float(north_east[0]), float(north_east[1])
        lat = self.origin_lat + north / self.metres_per_deg_north
        lon = self.origin_lon + east / self.metres_per_deg_east
        lon = (lon + 180.0) % 360.0 - 180.0
        return GeoPosition(lat=lat, lon=lon, height=height)

    def to_local_arrays(self, lat: np.ndarray, lon: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # Vectorised to_local for trajectories
        d_lon = (np.asarray(lon) - self.origin_lon + 180.0) % 360.0 - 180.0
        north = (np.asarray(lat) - self.origin_lat) * self.metres_per_deg_north
        return north, d_lon * self.metres_per_deg_east

    def from_local_arrays(self, north: np.ndarray, east: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lat = self.origin_lat + np.asarray(north) / self.metres_per_deg_north
        lon = self.origin_lon + np.asarray(east) / self.metres_per_deg_east
        return lat, (lon + 180.0) % 360.0 - 180.0
