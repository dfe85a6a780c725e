"""PMHT map matching: EM over PDA association and a Kalman/RTS smoothed track."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from filterpy.kalman import KalmanFilter
from scipy.stats import multivariate_normal

from ..mapping.grid import MapGrid
from ..models import PositionFix, PriorPosition
from ..utils import symmetrize
from .batch import PMHT, Batch, MatchParams, MatchResult
from .pda import gate_candidates, pda_estimate, pda_weights

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SyntheticMeasurement:
    """PDA mean and spread for one epoch, fed to the smoother as a position reading."""

    mean: np.ndarray
    cov: np.ndarray
    n_candidates: int


def associate(
    batch: Batch, grid: MapGrid, track: np.ndarray, params: MatchParams
) -> List[Optional[SyntheticMeasurement]]:
    """E-step: gate every epoch around the current track and fuse its candidates.

    The search window keeps the shape of the epoch's INS prior so the
    shrinking smoother covariance never collapses it.
    """
    synthetic: List[Optional[SyntheticMeasurement]] = []
    for k, (meas, prior) in enumerate(zip(batch.measurements, batch.priors)):
        if not grid.contains(track[k]):
            LOGGER.debug("Epoch %d track point left the map; skipping", k)
            synthetic.append(None)
            continue
        centred = PriorPosition(track[k], prior.cov)
        cands = gate_candidates(grid, centred, meas, params.gate)
        if cands.is_empty:
            synthetic.append(None)
            continue
        fix = pda_estimate(pda_weights(cands, centred))
        synthetic.append(SyntheticMeasurement(fix.mean, fix.cov, len(cands)))
    return synthetic


def _transition(dt: float) -> np.ndarray:
    transition = np.eye(4)
    transition[0, 2] = transition[1, 3] = dt
    return transition


def smooth(
    batch: Batch, synthetic: List[Optional[SyntheticMeasurement]], cell_size: float, params: MatchParams
) -> Tuple[np.ndarray, np.ndarray]:
    """M-step: forward Kalman filter and RTS smoother over the batch.

    The state is [north, east, v_north, v_east] expressed relative to the
    accumulated INS displacement, so the velocity part is the INS velocity
    error and the model is plain constant velocity. Returns absolute smoothed
    positions (m, 2) and the full smoothed covariances (m, 4, 4).
    """
    m = len(batch)
    offsets = np.vstack([np.zeros(2), np.cumsum(batch.displacements, axis=0)])
    step_covs = batch.step_covariances(cell_size, params.floor_fraction)
    dts = np.diff(batch.times)

    kf = KalmanFilter(dim_x=4, dim_z=2)
    kf.x = np.concatenate([batch.priors[0].mean, np.zeros(2)]).reshape(4, 1)
    kf.P = np.zeros((4, 4))
    kf.P[:2, :2] = batch.priors[0].cov
    kf.P[2:, 2:] = np.eye(2) * params.velocity_std ** 2
    kf.H = np.hstack([np.eye(2), np.zeros((2, 2))])

    Fs, Qs = [np.eye(4)], [np.zeros((4, 4))]
    for k in range(1, m):
        q = np.zeros((4, 4))
        q[:2, :2] = step_covs[k - 1]
        q[2:, 2:] = np.eye(2) * params.velocity_noise * dts[k - 1]
        Fs.append(_transition(dts[k - 1]))
        Qs.append(q)

    # Same recursion as KalmanFilter.batch_filter; epochs without a reading only predict
    means, covs = np.zeros((m, 4, 1)), np.zeros((m, 4, 4))
    for k, reading in enumerate(synthetic):
        kf.predict(F=Fs[k], Q=Qs[k])
        if reading is not None:
            kf.update((reading.mean - offsets[k]).reshape(2, 1), R=reading.cov)
        means[k], covs[k] = kf.x, kf.P
    smoothed, smoothed_covs, _, _ = kf.rts_smoother(means, covs, Fs=Fs, Qs=Qs)
    positions = smoothed[:, :2, 0] + offsets
    return positions, np.array([symmetrize(c) for c in smoothed_covs])


def em_objective(synthetic: List[Optional[SyntheticMeasurement]], positions: np.ndarray) -> float:
    # Sum of log N(z_bar_k; x_k, R_bar_k) over the epochs that produced a reading
    total = 0.0
    for k, reading in enumerate(synthetic):
        if reading is not None:
            density = multivariate_normal.logpdf(reading.mean, mean=positions[k], cov=reading.cov, allow_singular=True)
            total += float(density)
    return total


def pmht_mm(batch: Batch, grid: MapGrid, params: MatchParams = MatchParams()) -> MatchResult:
    """Estimate the current position from a batch by EM map matching.

    Each iteration re-gates every epoch around the previous smoothed track
    and re-smooths. The loop converges once no track point moves more than
    ``params.tol`` metres. An iteration that lowers the objective is discarded
    and stops the loop at the previous track with ``stalled`` set and
    ``converged`` left false.
    """
    track = np.array([prior.mean for prior in batch.priors])
    history: List[float] = []
    best: Optional[Tuple[np.ndarray, np.ndarray, List[Optional[SyntheticMeasurement]]]] = None
    converged = stalled = False

    for iteration in range(1, params.max_iters + 1):
        synthetic = associate(batch, grid, track, params)
        if all(reading is None for reading in synthetic):
            LOGGER.debug("Iteration %d gated no epoch", iteration)
            break
        positions, covs = smooth(batch, synthetic, grid.cell_size, params)
        objective = em_objective(synthetic, positions)
        if history and objective < history[-1]:
            LOGGER.warning(
                "Iteration %d lowered the objective (%.4f < %.4f); keeping the previous track",
                iteration,
                objective,
                history[-1],
            )
            stalled = True
            break
        history.append(objective)
        best = (positions, covs, synthetic)
        movement = float(np.max(np.linalg.norm(positions - track, axis=1)))
        LOGGER.debug("Iteration %d objective %.4f, track moved %.3f m", iteration, objective, movement)
        track = positions
        if len(batch) == 1 or movement < params.tol:
            converged = True
            break

    if best is None:
        LOGGER.warning("No epoch of the %d-epoch batch gated a candidate", len(batch))
        return MatchResult(PMHT, None, track, max(1, len(history)), False, [0] * len(batch), history)

    positions, covs, synthetic = best
    counts = [reading.n_candidates if reading is not None else 0 for reading in synthetic]
    fix = PositionFix(
        mean=positions[-1].copy(),
        cov=symmetrize(covs[-1][:2, :2]),
        time=batch.measurements[-1].time,
        n_candidates=counts[-1],
    )
    return MatchResult(PMHT, fix, positions, len(history), converged, counts, history, stalled=stalled)
