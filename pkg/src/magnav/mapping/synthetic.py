"""Seeded synthetic TMI maps for desk-scale experiments and tests."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from ..models import GeoPosition
from .geodesy import LocalFrame
from .grid import MapGrid

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticMapSpec:
    """Parameters of a smoothed Gaussian random field map.

    With ``octaves`` > 1 the field is a sum of progressively finer layers
    (correlation length halves and amplitude scales by ``persistence`` per
    octave), which gives the multi-scale texture of real anomaly maps.
    """

    n_rows: int = 256
    n_cols: int = 256
    cell_size: float = 85.0
    correlation_length_m: float = 1500.0
    amplitude_nT: float = 150.0
    octaves: int = 4
    persistence: float = 0.5
    ramp_nT_per_m: Tuple[float, float] = (0.0, 0.0)
    base_nT: float = 58000.0
    origin_lat: float = -38.0
    origin_lon: float = 144.5
    seed: int = 0

    @classmethod
    def covering(cls, start: GeoPosition, end: GeoPosition, margin_m: float, **overrides) -> "SyntheticMapSpec":
        # Sizes and georeferences a map around the straight corridor between two points
        spec = cls(**overrides)
        frame = LocalFrame.at(start.lat, start.lon)
        corners = np.vstack([frame.to_local(start), frame.to_local(end)])
        south_west = corners.min(axis=0) - margin_m
        span = corners.max(axis=0) - corners.min(axis=0) + 2.0 * margin_m
        origin = frame.from_local(south_west)
        n_rows = max(2, int(math.ceil(span[0] / spec.cell_size)))
        n_cols = max(2, int(math.ceil(span[1] / spec.cell_size)))
        return replace(spec, n_rows=n_rows, n_cols=n_cols, origin_lat=origin.lat, origin_lon=origin.lon)


def synthetic_map(spec: SyntheticMapSpec) -> MapGrid:
    """Generate the map described by ``spec``; identical specs give identical maps."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.n_rows, spec.n_cols)
    field = np.zeros(shape)
    for octave in range(max(1, spec.octaves)):
        smoothing = spec.correlation_length_m / spec.cell_size / (2 ** octave)
        layer = gaussian_filter(rng.standard_normal(shape), sigma=max(smoothing, 0.5), mode="reflect")
        std = layer.std()
        if std > 0:
            layer /= std
        field += spec.persistence ** octave * layer
    if field.std() > 0:
        field *= spec.amplitude_nT / field.std()
    rows, cols = np.indices(shape)
    north = (spec.n_rows - rows - 0.5) * spec.cell_size
    east = (cols + 0.5) * spec.cell_size
    field += spec.ramp_nT_per_m[0] * north + spec.ramp_nT_per_m[1] * east
    LOGGER.debug(
        "Generated %dx%d synthetic map (corr %.0f m, %d octaves, seed %d)",
        spec.n_rows, spec.n_cols, spec.correlation_length_m, spec.octaves, spec.seed,
    )
    return MapGrid(
        origin_lat=spec.origin_lat,
        origin_lon=spec.origin_lon,
        cell_size=spec.cell_size,
        values=spec.base_nT + field,
    )
