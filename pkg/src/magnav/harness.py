"""Navigation experiment orchestration: single runs and Monte Carlo aggregation."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from itertools import repeat
from typing import Dict, List, Optional

import numpy as np

from .config import CaseConfig, ScenarioConfig
from .errors import ConfigurationError, MagnavError, MapBoundsError, NodataError, RunError
from .mapping import MapGrid, SyntheticMapSpec, load_grid, sample_many, synthetic_map
from .matching import Batch, match_batch
from .matching.quality import QualityRaster, SearchWindow, default_prior_cov, mfv
from .models import VEL, GeoPosition, MagMeasurement, PriorPosition
from .navigation import InsPropagator, NavigationFilter, TruthTrajectory, generate_truth, simulate_imu
from .utils import derive_rng, derive_seed

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScenarioSetup:
    """Run-independent parts of a scenario.

    ``mag_indices`` are the truth sample indices at which the magnetometer
    reads and ``mag_truth`` the noise-free map values there.
    """

    grid: MapGrid
    truth: TruthTrajectory
    mag_indices: np.ndarray
    mag_truth: np.ndarray
    mfv_raster: Optional[QualityRaster] = None

    @property
    def mag_samples(self) -> int:
        return int(self.mag_indices.size)


@dataclass(frozen=True, eq=False)
class RunRecord:
    """Time series of one run of one case, sampled at every IMU epoch."""

    label: str
    seed: int
    times: np.ndarray
    errors: np.ndarray
    truth_lat: np.ndarray
    truth_lon: np.ndarray
    est_lat: np.ndarray
    est_lon: np.ndarray
    mag_samples: int
    attempts: int
    fixes: int
    accepted: int
    rejected: int

    @property
    def final_error(self) -> float:
        return float(self.errors[-1])


@dataclass(frozen=True, eq=False)
class RunMetrics:
    """Errors of every run of one case on a common time base, shape (n_runs, n_times)."""

    label: str
    times: np.ndarray
    errors: np.ndarray
    mag_samples: int
    attempts: int
    fixes: int
    accepted: int
    rejected: int

    @property
    def n_runs(self) -> int:
        return int(self.errors.shape[0])

    @property
    def rms(self) -> np.ndarray:
        return np.sqrt(np.mean(self.errors ** 2, axis=0))

    @property
    def final_rms(self) -> float:
        return float(self.rms[-1])

    @property
    def mean_rms(self) -> float:
        return float(np.mean(self.rms))

    @property
    def success_rate(self) -> Optional[float]:
        return self.fixes / self.attempts if self.attempts else None

    @classmethod
    def from_records(cls, records: List[RunRecord]) -> "RunMetrics":
        """Stacks run records in the given order; counts are summed over runs."""
        if not records:
            raise ValueError("at least one run record is required")
        times = records[0].times
        for record in records[1:]:
            if record.times.shape != times.shape or not np.array_equal(record.times, times):
                raise ValueError(f"run {record.seed} of case {record.label!r} is on a different time base")
        return cls(
            label=records[0].label,
            times=times,
            errors=np.vstack([record.errors for record in records]),
            mag_samples=records[0].mag_samples,
            attempts=sum(record.attempts for record in records),
            fixes=sum(record.fixes for record in records),
            accepted=sum(record.accepted for record in records),
            rejected=sum(record.rejected for record in records),
        )


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    cases: Dict[str, RunMetrics]
    records: Dict[str, List[RunRecord]]
    seeds: List[int]

    @property
    def n_runs(self) -> int:
        return len(self.seeds)


def resolve_map(config: ScenarioConfig) -> MapGrid:
    """Loads the configured map file or generates a synthetic map around the route."""
    if config.map_path is not None:
        grid = load_grid(config.map_path)
        LOGGER.info("Loaded %dx%d map from %s", grid.n_rows, grid.n_cols, config.map_path)
        return grid
    end = config.end
    if config.duration is not None:
        # Only the flown part of the route needs map coverage
        flown = generate_truth(config.start, config.end, config.speed, rate=config.sensor.rate).truncated(config.duration)
        end = flown.geo(len(flown) - 1)
    values = {item.name: getattr(config.synthetic, item.name) for item in fields(SyntheticMapSpec)}
    spec = SyntheticMapSpec.covering(config.start, end, config.map_margin_m, **values)
    grid = synthetic_map(spec)
    LOGGER.info("Generated %dx%d synthetic map at %.0f m cells", grid.n_rows, grid.n_cols, grid.cell_size)
    return grid


def prepare(config: ScenarioConfig, grid: Optional[MapGrid] = None) -> ScenarioSetup:
    """Builds the map, truth path and magnetometer schedule shared by every run.

    Raises ConfigurationError before any run starts when the path leaves the
    map or crosses nodata, or when the magnetometer period is not a whole
    number of IMU samples.
    """
    grid = grid if grid is not None else resolve_map(config)
    start = GeoPosition(config.start.lat, config.start.lon, config.height)
    truth = generate_truth(start, config.end, config.speed, rate=config.sensor.rate, frame=grid.frame)
    if config.duration is not None:
        truth = truth.truncated(config.duration)
    try:
        values = sample_many(grid, truth.positions)
    except (MapBoundsError, NodataError) as exc:
        raise ConfigurationError(f"trajectory is not covered by the map: {exc}", key="map") from exc

    steps = config.mag_period * truth.rate
    if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
        raise ConfigurationError(
            f"period {config.mag_period} s is not a whole number of {truth.rate:g} Hz samples",
            key="magnetometer.period_s",
        )
    count = int(math.floor(truth.duration / config.mag_period + 1e-9))
    mag_indices = int(round(steps)) * np.arange(1, count + 1)

    raster = None
    if config.mfv_weighting.enabled:
        raster = mfv(grid, SearchWindow.from_gate(default_prior_cov(), config.match.gate))
    LOGGER.debug("Scenario of %.0f s with %d magnetometer readings", truth.duration, count)
    return ScenarioSetup(grid=grid, truth=truth, mag_indices=mag_indices, mag_truth=values[mag_indices], mfv_raster=raster)


class ScenarioRunner:
    """Runs one navigation state machine per (seed, case) over a prepared scenario."""

    def __init__(self, config: ScenarioConfig, setup: Optional[ScenarioSetup] = None):
        self.config = config
        self.setup = setup if setup is not None else prepare(config)
        floor = config.prior_floor_m if config.prior_floor_m is not None else self.setup.grid.cell_size
        self._prior_floor = floor ** 2 * np.eye(2)

    def _aid(self, nav: NavigationFilter, batch: Batch) -> bool:
        # Matches one full batch and hands a fix to the filter; False when no fix came out
        try:
            result = match_batch(batch, self.setup.grid, self.config.algorithm, self.config.match)
        except MapBoundsError as exc:
            LOGGER.warning("Batch ending at t=%.0f s left the map: %s", batch.times[-1], exc)
            return False
        if not result.has_fix:
            LOGGER.warning("No fix from the batch ending at t=%.0f s", batch.times[-1])
            return False
        nav.aid(result.fix)
        return True

    def run(self, run_seed: int, case: CaseConfig) -> RunRecord:
        """Truth, IMU, INS and (when aided) map matching for one seed.

        The magnetometer noise draws depend only on the seed, so cases that
        differ in sigma see scaled copies of the same noise sequence.
        """
        config, setup = self.config, self.setup
        truth = setup.truth
        imu = simulate_imu(truth, config.sensor, run_seed)
        propagator = InsPropagator(truth, config.sensor, config.initial)
        nav = NavigationFilter(
            propagator,
            propagator.initial_state(derive_rng(run_seed, 2)),
            config.ukf,
            mfv_raster=setup.mfv_raster,
            weighting=config.mfv_weighting,
        )
        noise = derive_rng(run_seed, 3).standard_normal(setup.mag_samples)
        schedule = {int(index): j for j, index in enumerate(setup.mag_indices)} if case.aided else {}

        n = len(truth)
        estimate = np.zeros((n, 2))
        measurements: List[MagMeasurement] = []
        priors: List[PriorPosition] = []
        velocity_covs: List[np.ndarray] = []
        attempts = fixes = 0
        for index in range(n):
            if index in schedule:
                j = schedule[index]
                state = nav.state
                measurements.append(MagMeasurement(setup.mag_truth[j] + case.sigma * noise[j], case.sigma, state.time))
                priors.append(PriorPosition(nav.local_position(), state.position_cov + self._prior_floor))
                velocity_covs.append(state.cov[VEL, VEL])
                if len(measurements) == config.batch_length:
                    attempts += 1
                    fixes += self._aid(nav, Batch.from_epochs(measurements, priors, velocity_covs))
                    measurements, priors, velocity_covs = [], [], []
            estimate[index] = nav.local_position()
            if index + 1 < n:
                nav.propagate(imu[index])

        errors = np.hypot(*(estimate - truth.positions).T)
        truth_lat, truth_lon = truth.lat_lon()
        est_lat, est_lon = truth.frame.from_local_arrays(estimate[:, 0], estimate[:, 1])
        LOGGER.debug(
            "Run %d case %s: final error %.1f m, %d/%d fixes, %d rejected",
            run_seed, case.label, errors[-1], fixes, attempts, nav.rejected,
        )
        return RunRecord(
            label=case.label,
            seed=run_seed,
            times=truth.times.copy(),
            errors=errors,
            truth_lat=np.asarray(truth_lat),
            truth_lon=np.asarray(truth_lon),
            est_lat=np.asarray(est_lat),
            est_lon=np.asarray(est_lon),
            mag_samples=setup.mag_samples,
            attempts=attempts,
            fixes=fixes,
            accepted=nav.accepted,
            rejected=nav.rejected,
        )


def run_scenario(
    config: ScenarioConfig, run_seed: int, case: Optional[CaseConfig] = None, setup: Optional[ScenarioSetup] = None
) -> RunRecord:
    """A single run of ``case`` (the first configured case by default)."""
    return ScenarioRunner(config, setup).run(run_seed, case or config.cases[0])


def _run_index(config: ScenarioConfig, setup: ScenarioSetup, index: int) -> Dict[str, RunRecord]:
    # One Monte Carlo index: every case on the same derived seed; module level so workers can pickle it
    seed = derive_seed(config.seed, index)
    runner = ScenarioRunner(config, setup)
    try:
        return {case.label: runner.run(seed, case) for case in config.cases}
    except (MagnavError, ValueError, np.linalg.LinAlgError) as exc:
        raise RunError(index, str(exc)) from exc


def run_monte_carlo(config: ScenarioConfig, workers: int = 1, setup: Optional[ScenarioSetup] = None) -> MonteCarloResult:
    """``config.n_runs`` independent runs of every case, aggregated per case.

    Run i uses derive_seed(config.seed, i). Results are reduced in run-index
    order, so the output does not depend on ``workers``.
    """
    if workers < 1:
        raise ConfigurationError(f"must be at least 1, got {workers}", key="workers")
    setup = setup if setup is not None else prepare(config)
    indices = range(config.n_runs)
    if workers > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.n_runs)) as executor:
            outcomes = list(executor.map(_run_index, repeat(config), repeat(setup), indices))
    else:
        outcomes = [_run_index(config, setup, index) for index in indices]

    records = {case.label: [outcome[case.label] for outcome in outcomes] for case in config.cases}
    cases = {label: RunMetrics.from_records(runs) for label, runs in records.items()}
    for label, metrics in cases.items():
        LOGGER.info(
            "Case %s: final RMS %.1f m over %d runs, %d/%d fixes",
            label, metrics.final_rms, metrics.n_runs, metrics.fixes, metrics.attempts,
        )
    return MonteCarloResult(cases=cases, records=records, seeds=[derive_seed(config.seed, i) for i in indices])
