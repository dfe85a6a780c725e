"""Total-magnetic-intensity grid maps: storage, interpolation and resampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from ..errors import ConfigurationError, MapBoundsError, NodataError
from .geodesy import LocalFrame

LOGGER = logging.getLogger(__name__)

DEFAULT_NODATA = -99999.0


@dataclass(frozen=True, eq=False)
class MapGrid:
    """Georeferenced raster of TMI values in nanotesla.

    ``values`` is stored row-major with row 0 the northernmost row. The origin
    is the south-west corner of the south-west cell; local coordinates are
    (north, east) metres in the map's LocalFrame, so cell (r, c) has its
    centre at ((n_rows - r - 0.5) * cell_size, (c + 0.5) * cell_size).
    """

    origin_lat: float
    origin_lon: float
    cell_size: float
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValueError(f"map values must be two-dimensional, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"map needs at least one cell, got {values.shape[0]}x{values.shape[1]}")
        if not self.cell_size > 0:
            raise ValueError(f"cell size must be positive, got {self.cell_size}")
        valid = values != self.nodata
        if not np.all(np.isfinite(values[valid])):
            raise ValueError("map contains non-finite values outside nodata cells")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        for name in ("origin_lat", "origin_lon", "cell_size", "nodata"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])

    @cached_property
    def frame(self) -> LocalFrame:
        return LocalFrame.at(self.origin_lat, self.origin_lon)

    @cached_property
    def valid_mask(self) -> np.ndarray:
        mask = self.values != self.nodata
        mask.setflags(write=False)
        return mask

    @property
    def nodata_count(self) -> int:
        return int(self.values.size - np.count_nonzero(self.valid_mask))

    @property
    def extent(self) -> Tuple[float, float]:
        # North and east size of the raster in metres
        return self.n_rows * self.cell_size, self.n_cols * self.cell_size

    def value_range(self) -> Tuple[float, float]:
        valid = self.values[self.valid_mask]
        if valid.size == 0:
            return float("nan"), float("nan")
        return float(valid.min()), float(valid.max())

    def cell_centres(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        # Local (north, east) coordinates of the given cells, shape (n, 2)
        rows = np.asarray(rows, dtype=float)
        cols = np.asarray(cols, dtype=float)
        north = (self.n_rows - rows - 0.5) * self.cell_size
        east = (cols + 0.5) * self.cell_size
        return np.stack([north, east], axis=-1)

    def cell_centre(self, row: int, col: int) -> np.ndarray:
        return self.cell_centres(np.array(row), np.array(col))

    def fractional_index(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # Continuous (row, col) coordinates where integers are cell centres
        points = np.asarray(points, dtype=float)
        rows = (self.n_rows - 0.5) - points[..., 0] / self.cell_size
        cols = points[..., 1] / self.cell_size - 0.5
        return rows, cols

    def contains(self, point: np.ndarray, margin: float = 0.0) -> bool:
        # True when the point lies inside the raster footprint shrunk by margin
        north_max, east_max = self.extent
        north, east = float(point[0]), float(point[1])
        return margin <= north <= north_max - margin and margin <= east <= east_max - margin

    def interpolable(self, point: np.ndarray) -> bool:
        # True inside the hull of cell centres, where bilinear lookup is defined
        row, col = self.fractional_index(np.asarray(point, dtype=float))
        eps = 1e-9
        return bool(-eps <= row <= self.n_rows - 1 + eps and -eps <= col <= self.n_cols - 1 + eps)

    @cached_property
    def gradient_magnitude(self) -> np.ndarray:
        """Central-difference |grad m| in nT/m; zero where a neighbour is nodata."""
        if self.n_rows < 2 or self.n_cols < 2:
            flat = np.zeros(self.values.shape)
            flat.setflags(write=False)
            return flat
        field = np.where(self.valid_mask, self.values, np.nan)
        d_row, d_col = np.gradient(field, self.cell_size)
        magnitude = np.hypot(d_row, d_col)
        magnitude = np.where(np.isfinite(magnitude), magnitude, 0.0)
        magnitude.setflags(write=False)
        return magnitude

    def with_values(self, values: np.ndarray, nodata: float | None = None) -> "MapGrid":
        # Same georeferencing with a new raster of identical shape
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError(f"shape {values.shape} does not match map shape {self.values.shape}")
        return MapGrid(
            origin_lat=self.origin_lat,
            origin_lon=self.origin_lon,
            cell_size=self.cell_size,
            values=values,
            nodata=self.nodata if nodata is None else nodata,
        )


def sample_many(grid: MapGrid, points: np.ndarray) -> np.ndarray:
    """Bilinear TMI lookup at an array of local (north, east) points, shape (n, 2)."""
    if grid.n_rows < 2 or grid.n_cols < 2:
        raise ValueError(f"bilinear lookup needs at least 2x2 cells, got {grid.n_rows}x{grid.n_cols}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rows, cols = grid.fractional_index(points)
    eps = 1e-9
    outside = (rows < -eps) | (rows > grid.n_rows - 1 + eps) | (cols < -eps) | (cols > grid.n_cols - 1 + eps)
    if np.any(outside):
        bad = points[np.argmax(outside)]
        raise MapBoundsError(float(bad[0]), float(bad[1]))
    rows = np.clip(rows, 0.0, grid.n_rows - 1)
    cols = np.clip(cols, 0.0, grid.n_cols - 1)
    # Every one of the four surrounding cells has to carry data
    r0 = np.minimum(np.floor(rows).astype(int), grid.n_rows - 2)
    c0 = np.minimum(np.floor(cols).astype(int), grid.n_cols - 2)
    mask = grid.valid_mask
    ok = mask[r0, c0] & mask[r0 + 1, c0] & mask[r0, c0 + 1] & mask[r0 + 1, c0 + 1]
    if not np.all(ok):
        bad = points[np.argmin(ok)]
        raise NodataError(f"nodata cell next to north={bad[0]:.3f} m, east={bad[1]:.3f} m")
    return map_coordinates(grid.values, np.vstack([rows, cols]), order=1, mode="nearest", prefilter=False)


def sample(grid: MapGrid, point: np.ndarray) -> float:
    """Bilinear TMI lookup at a single local (north, east) point."""
    return float(sample_many(grid, np.asarray(point, dtype=float).reshape(1, 2))[0])


def downsample(grid: MapGrid, factor: int) -> MapGrid:
    """Block-mean resampling by an integer factor.

    Blocks are anchored at the south-west origin, so partial blocks along the
    northern and eastern edges are dropped and the georeferencing is kept.
    Nodata cells are excluded from each mean; an all-nodata block is nodata.
    """
    if int(factor) != factor or factor < 2:
        raise ConfigurationError(f"downsample factor must be an integer >= 2, got {factor}", key="factor")
    factor = int(factor)
    out_rows, out_cols = grid.n_rows // factor, grid.n_cols // factor
    if out_rows < 1 or out_cols < 1:
        raise ConfigurationError(
            f"factor {factor} exceeds the {grid.n_rows}x{grid.n_cols} map", key="factor"
        )
    skip_rows = grid.n_rows - out_rows * factor
    block = grid.values[skip_rows:, : out_cols * factor]
    block_mask = grid.valid_mask[skip_rows:, : out_cols * factor]
    sums = np.where(block_mask, block, 0.0).reshape(out_rows, factor, out_cols, factor).sum(axis=(1, 3))
    counts = block_mask.reshape(out_rows, factor, out_cols, factor).sum(axis=(1, 3))
    values = np.where(counts > 0, sums / np.maximum(counts, 1), grid.nodata)
    LOGGER.debug("Downsampled %dx%d map by %d to %dx%d", grid.n_rows, grid.n_cols, factor, out_rows, out_cols)
    return MapGrid(
        origin_lat=grid.origin_lat,
        origin_lon=grid.origin_lon,
        cell_size=grid.cell_size * factor,
        values=np.asarray(values, dtype=float),
        nodata=grid.nodata,
    )
