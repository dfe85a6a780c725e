"""Shared fixtures: analytic plane maps, small synthetic maps and scenario documents."""
from __future__ import annotations

import copy
from typing import Any, Dict, List, Tuple

import numpy as np
import pytest

from magnav.mapping import MapGrid, SyntheticMapSpec, synthetic_map
from magnav.matching import Batch
from magnav.models import MagMeasurement, PriorPosition

ORIGIN_LAT = -38.0
ORIGIN_LON = 144.5

# Per-cell steps of 1 nT north and 0.137 nT east keep every pair of cells within
# ten rows and columns of each other at least 0.041 nT apart
PLANE_GRADIENT = (0.01, 0.00137)

SCENARIO: Dict[str, Any] = {
    "schema_version": 1,
    "trajectory": {
        "start": {"lat": -38.0, "lon": 144.5},
        "end": {"lat": -37.9, "lon": 144.6},
        "speed_mps": 22.0,
        "height_m": 100.0,
        "duration_s": 600,
    },
    "map": {"synthetic": {"cell_size": 85.0, "seed": 11}, "margin_m": 3000},
    "imu": {"preset": "tactical"},
    "initial_uncertainty": {"position_std_m": 500.0},
    "magnetometer": {"period_s": 10, "batch_length": 6},
    "matching": {"algorithm": "pmht"},
    "cases": [
        {"label": "ins-only", "aided": False},
        {"label": "sigma-0.1nT", "sigma_nT": 0.1},
    ],
    "monte_carlo": {"n_runs": 2, "seed": 5},
}


def plane_values(n_rows: int, n_cols: int, cell_size: float, gradient=PLANE_GRADIENT, base: float = 50000.0) -> np.ndarray:
    rows, cols = np.indices((n_rows, n_cols))
    north = (n_rows - rows - 0.5) * cell_size
    east = (cols + 0.5) * cell_size
    return base + gradient[0] * north + gradient[1] * east


def plane_grid(n_rows: int = 40, n_cols: int = 40, cell_size: float = 100.0, **kwargs) -> MapGrid:
    return MapGrid(ORIGIN_LAT, ORIGIN_LON, cell_size, plane_values(n_rows, n_cols, cell_size, **kwargs))


def straight_batch(
    grid: MapGrid,
    row: int,
    first_col: int,
    n_epochs: int,
    col_step: int = 2,
    sigma: float = 0.001,
    offset=(150.0, -120.0),
    prior_std: float = 300.0,
) -> Tuple[Batch, np.ndarray]:
    """Eastbound batch whose truth sits on cell centres, read without noise."""
    cols = first_col + col_step * np.arange(n_epochs)
    truth = grid.cell_centres(np.full(n_epochs, row), cols)
    measurements: List[MagMeasurement] = []
    priors: List[PriorPosition] = []
    for k in range(n_epochs):
        measurements.append(MagMeasurement(float(grid.values[row, cols[k]]), sigma, 10.0 * (k + 1)))
        priors.append(PriorPosition(truth[k] + np.asarray(offset), prior_std ** 2 * np.eye(2)))
    return Batch.from_epochs(measurements, priors), truth


def crop(grid: MapGrid, row0: int, col0: int, size: int) -> MapGrid:
    """Square window of a larger map that keeps the parent's origin.

    Moving the window by (di, dj) cells moves every feature by
    (di * cell_size, -dj * cell_size) in local metres.
    """
    values = grid.values[row0 : row0 + size, col0 : col0 + size]
    return MapGrid(grid.origin_lat, grid.origin_lon, grid.cell_size, values, grid.nodata)


@pytest.fixture
def plane() -> MapGrid:
    return plane_grid()


@pytest.fixture(scope="session")
def small_synthetic() -> MapGrid:
    return synthetic_map(SyntheticMapSpec(n_rows=96, n_cols=96, seed=3))


@pytest.fixture
def scenario_data() -> Dict[str, Any]:
    return copy.deepcopy(SCENARIO)


@pytest.fixture
def isolated_env(monkeypatch, tmp_path):
    # Runtime settings from a clean environment, outputs under tmp_path
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("MAGNAV_WORKERS", "1")
    monkeypatch.setenv("MAGNAV_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("MAGNAV_LOG_LEVEL", "WARNING")
    return tmp_path
