"""Map informativeness: feature variability rasters and PDA error statistics."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..mapping.grid import DEFAULT_NODATA, MapGrid, downsample, sample_many
from ..models import MagMeasurement, PriorPosition
from ..utils import derive_rng
from .pda import CandidateSet, GateParams, pda_error, pda_estimate, pda_weights, signal_gate, window_candidates

LOGGER = logging.getLogger(__name__)

MFV = "mfv"
PDA_ERROR = "pda-error"

DEFAULT_PRIOR_STD_M = 300.0


def default_prior_cov() -> np.ndarray:
    return np.eye(2) * DEFAULT_PRIOR_STD_M ** 2


@dataclass(frozen=True, eq=False)
class QualityRaster:
    """A per-cell quality metric sharing the georeferencing of the source map.

    ``kind`` is ``"mfv"`` (nT^2) or ``"pda-error"`` (metres). Cells without a
    value carry the DEFAULT_NODATA sentinel.
    """

    grid: MapGrid
    kind: str
    normalized: bool = False

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def valid_mask(self) -> np.ndarray:
        return self.grid.valid_mask

    def at(self, point: np.ndarray) -> Optional[float]:
        # Value of the cell holding a local point, None off the map or on nodata
        if not self.grid.contains(point):
            return None
        rows, cols = self.grid.fractional_index(np.asarray(point, dtype=float))
        row = int(min(max(round(float(rows)), 0), self.grid.n_rows - 1))
        col = int(min(max(round(float(cols)), 0), self.grid.n_cols - 1))
        if not self.grid.valid_mask[row, col]:
            return None
        return float(self.grid.values[row, col])

    def maximum(self) -> float:
        valid = self.values[self.valid_mask]
        return float(valid.max()) if valid.size else 0.0


@dataclass(frozen=True)
class SearchWindow:
    """Ellipse (x' cov^-1 x <= gamma) quantised to whole cell offsets."""

    cov: Tuple[Tuple[float, float], Tuple[float, float]]
    gamma: float

    @classmethod
    def from_gate(cls, cov: np.ndarray, params: GateParams = GateParams()) -> "SearchWindow":
        cov = np.asarray(cov, dtype=float)
        return cls(cov=((cov[0, 0], cov[0, 1]), (cov[1, 0], cov[1, 1])), gamma=float(params.gamma))

    @classmethod
    def circular(cls, radius_m: float) -> "SearchWindow":
        return cls(cov=((radius_m ** 2, 0.0), (0.0, radius_m ** 2)), gamma=1.0)

    def offsets(self, cell_size: float) -> Tuple[np.ndarray, np.ndarray]:
        """Row and column offsets of every neighbour inside the ellipse, centre excluded."""
        cov = np.asarray(self.cov, dtype=float)
        reach_rows = int(math.floor(math.sqrt(self.gamma * cov[0, 0]) / cell_size))
        reach_cols = int(math.floor(math.sqrt(self.gamma * cov[1, 1]) / cell_size))
        d_rows, d_cols = np.meshgrid(
            np.arange(-reach_rows, reach_rows + 1), np.arange(-reach_cols, reach_cols + 1), indexing="ij"
        )
        d_rows, d_cols = d_rows.ravel(), d_cols.ravel()
        # A positive row offset points south
        delta = np.stack([-d_rows * cell_size, d_cols * cell_size], axis=1).astype(float)
        distance = np.einsum("ni,ij,nj->n", delta, np.linalg.inv(cov), delta)
        keep = (distance <= self.gamma) & ~((d_rows == 0) & (d_cols == 0))
        return d_rows[keep], d_cols[keep]


def _shifted(field: np.ndarray, d_row: int, d_col: int) -> np.ndarray:
    # field[r + d_row, c + d_col] aligned on (r, c), NaN where it falls off the raster
    out = np.full(field.shape, np.nan)
    n_rows, n_cols = field.shape
    src_rows = slice(max(d_row, 0), n_rows + min(d_row, 0))
    dst_rows = slice(max(-d_row, 0), n_rows + min(-d_row, 0))
    src_cols = slice(max(d_col, 0), n_cols + min(d_col, 0))
    dst_cols = slice(max(-d_col, 0), n_cols + min(-d_col, 0))
    out[dst_rows, dst_cols] = field[src_rows, src_cols]
    return out


def mfv(grid: MapGrid, window: SearchWindow, normalize: bool = False) -> QualityRaster:
    """Mean squared value difference between each cell and its window neighbours.

    Neighbours falling off the map or on nodata cells are left out of the
    mean, so edge cells use whatever part of the window remains.
    """
    d_rows, d_cols = window.offsets(grid.cell_size)
    if d_rows.size == 0:
        raise ConfigurationError(
            f"search window holds no neighbour at cell size {grid.cell_size:g} m", key="window"
        )
    field = np.where(grid.valid_mask, grid.values, np.nan)
    total = np.zeros(field.shape)
    count = np.zeros(field.shape, dtype=int)
    for d_row, d_col in zip(d_rows.tolist(), d_cols.tolist()):
        squared = (field - _shifted(field, d_row, d_col)) ** 2
        present = np.isfinite(squared)
        total += np.where(present, squared, 0.0)
        count += present
    values = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    if normalize:
        peak = np.nanmax(values) if np.any(np.isfinite(values)) else 0.0
        if peak > 0:
            values = values / peak
    LOGGER.debug("MFV over %d window offsets on a %dx%d map", d_rows.size, grid.n_rows, grid.n_cols)
    return QualityRaster(
        grid=grid.with_values(np.where(np.isfinite(values), values, DEFAULT_NODATA), nodata=DEFAULT_NODATA),
        kind=MFV,
        normalized=normalize,
    )


def _fix_error(window: CandidateSet, reading: MagMeasurement, kappa: float, truth: np.ndarray) -> Optional[float]:
    gated = signal_gate(window, reading, kappa)
    if gated.is_empty:
        return None
    return pda_error(pda_estimate(pda_weights(gated, gated.prior)), truth)


def pda_error_map(
    grid: MapGrid,
    sigma: float,
    prior_cov: Optional[np.ndarray] = None,
    params: GateParams = GateParams(),
    n_samples: int = 16,
    seed: int = 0,
) -> QualityRaster:
    """Mean PDA error distance per cell with the truth at the cell centre.

    Each cell draws ``n_samples`` noisy readings from its own random stream;
    readings whose gate comes back empty are left out, and a cell where every
    reading failed to gate is nodata.
    """
    if n_samples < 1:
        raise ConfigurationError(f"must be at least 1, got {n_samples}", key="n_samples")
    if not sigma > 0:
        raise ConfigurationError(f"must be positive, got {sigma}", key="sigma")
    prior_cov = default_prior_cov() if prior_cov is None else np.asarray(prior_cov, dtype=float)
    errors = np.full(grid.values.shape, np.nan)
    for flat_index in np.flatnonzero(grid.valid_mask):
        row, col = divmod(int(flat_index), grid.n_cols)
        truth = grid.cell_centre(row, col)
        window = window_candidates(grid, PriorPosition(truth, prior_cov), sigma, params)
        noise = sigma * derive_rng(seed, int(flat_index)).standard_normal(n_samples)
        distances = []
        for nu in noise:
            reading = MagMeasurement(value=float(grid.values[row, col] + nu), sigma=sigma)
            distance = _fix_error(window, reading, params.kappa, truth)
            if distance is not None:
                distances.append(distance)
        if distances:
            errors[row, col] = float(np.mean(distances))
    missing = int(np.count_nonzero(grid.valid_mask & ~np.isfinite(errors)))
    if missing:
        LOGGER.warning("%d cells never gated a candidate at sigma=%g nT", missing, sigma)
    raster = grid.with_values(np.where(np.isfinite(errors), errors, DEFAULT_NODATA), nodata=DEFAULT_NODATA)
    return QualityRaster(grid=raster, kind=PDA_ERROR)


@dataclass(frozen=True)
class SweepResult:
    """Aggregated PDA error for one (sensor sigma, grid factor) pair.

    ``n_samples`` counts the readings that produced a fix; ``n_empty`` those
    whose gate came back empty. When nothing gated, the error fields are NaN.
    """

    sensor_sigma: float
    grid_factor: int
    mean_error: float
    std_error: float
    n_samples: int
    n_empty: int = 0

    def to_dict(self) -> Dict[str, float]:
        return {
            "sigma": self.sensor_sigma,
            "factor": self.grid_factor,
            "mean_error_m": self.mean_error,
            "std_error_m": self.std_error,
            "n": self.n_samples,
        }


def sweep_points(
    grid: MapGrid, n_points: int, prior_cov: np.ndarray, params: GateParams, seed: int, max_factor: int = 1
) -> np.ndarray:
    """Uniform sample points over the map interior, away from the edge by one window.

    The margin is at least one coarse cell so the points stay on every
    downsampled map, which loses its partial northern and eastern blocks.
    """
    edge = grid.cell_size * max(1, max_factor)
    half_north = max(math.sqrt(params.gamma * prior_cov[0, 0]), edge)
    half_east = max(math.sqrt(params.gamma * prior_cov[1, 1]), edge)
    north_max, east_max = grid.extent
    if 2 * half_north >= north_max or 2 * half_east >= east_max:
        raise ConfigurationError("search window is larger than the map interior", key="prior_cov")
    rng = derive_rng(seed, 0)
    north = rng.uniform(half_north, north_max - half_north, size=n_points)
    east = rng.uniform(half_east, east_max - half_east, size=n_points)
    return np.stack([north, east], axis=1)


def _sweep_cell(
    matching_grid: MapGrid,
    factor: int,
    sigma: float,
    points: np.ndarray,
    truth_values: np.ndarray,
    xi: np.ndarray,
    prior_cov: np.ndarray,
    params: GateParams,
) -> SweepResult:
    # One (sigma, factor) cell of the sweep; xi holds standard normals per point and realisation
    distances: List[float] = []
    empty = 0
    for index, point in enumerate(points):
        window = window_candidates(matching_grid, PriorPosition(point, prior_cov), sigma, params)
        for standard_normal in xi[index]:
            reading = MagMeasurement(value=float(truth_values[index] + sigma * standard_normal), sigma=sigma)
            distance = _fix_error(window, reading, params.kappa, point)
            if distance is None:
                empty += 1
            else:
                distances.append(distance)
    if not distances:
        LOGGER.warning("No reading gated at sigma=%g nT, factor %d", sigma, factor)
        return SweepResult(sigma, factor, float("nan"), float("nan"), 0, empty)
    values = np.asarray(distances)
    LOGGER.debug("sigma=%g factor=%d mean=%.2f m (%d fixes, %d empty)", sigma, factor, values.mean(), values.size, empty)
    return SweepResult(sigma, factor, float(values.mean()), float(values.std()), int(values.size), empty)


def noise_resolution_sweep(
    grid: MapGrid,
    sigmas: Sequence[float],
    factors: Sequence[int],
    n_samples: int = 200,
    seed: int = 0,
    prior_cov: Optional[np.ndarray] = None,
    params: GateParams = GateParams(resolution_aware=True),
    n_noise: int = 1,
    workers: int = 1,
) -> List[SweepResult]:
    """PDA error over every (sigma, factor) pair.

    The same sample points and the same standard-normal draws are shared by
    every pair, so neighbouring cells of the sweep are paired comparisons.
    Readings come from the full-resolution map; gating runs on the map
    downsampled by ``factor`` (factor 1 keeps the original).
    """
    if not sigmas or not factors:
        raise ConfigurationError("sigmas and factors must both be non-empty", key="sweep")
    if any(not s > 0 for s in sigmas):
        raise ConfigurationError("every sigma must be positive", key="sigmas")
    if n_samples < 1 or n_noise < 1:
        raise ConfigurationError("sample and noise counts must be at least 1", key="n_samples")
    prior_cov = default_prior_cov() if prior_cov is None else np.asarray(prior_cov, dtype=float)
    points = sweep_points(grid, n_samples, prior_cov, params, seed, max(int(f) for f in factors))
    truth_values = sample_many(grid, points)
    xi = derive_rng(seed, 1).standard_normal((n_samples, n_noise))
    grids = {int(f): grid if int(f) == 1 else downsample(grid, int(f)) for f in factors}
    jobs = [(grids[int(f)], int(f), float(s), points, truth_values, xi, prior_cov, params) for f in factors for s in sigmas]
    LOGGER.info("Sweeping %d sigmas x %d factors over %d points", len(sigmas), len(factors), n_samples)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_cell, *job) for job in jobs]
            return [future.result() for future in futures]
    return [_sweep_cell(*job) for job in jobs]
