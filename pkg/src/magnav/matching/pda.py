"""Probabilistic data association from one scalar reading to a map position."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from ..errors import ConfigurationError, MapBoundsError
from ..mapping.grid import MapGrid
from ..models import MagMeasurement, PositionFix, PriorPosition
from ..utils import chi2_threshold

LOGGER = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GateParams:
    """Search-window and signal gate settings.

    ``gamma`` defaults to the 2-dof chi-square quantile of ``gate_probability``
    (9.21 at 99 %). With ``resolution_aware`` the signal tolerance also covers
    the spread of field values inside one cell.
    """

    gate_probability: float = 0.99
    gamma: Optional[float] = None
    kappa: float = 3.0
    resolution_aware: bool = False

    def __post_init__(self) -> None:
        if self.gamma is None:
            if not 0.0 < self.gate_probability < 1.0:
                raise ConfigurationError("must lie in (0, 1)", key="gate_probability")
            object.__setattr__(self, "gamma", chi2_threshold(self.gate_probability))
        if not self.gamma > 0:
            raise ConfigurationError(f"must be positive, got {self.gamma}", key="gamma")
        if not self.kappa > 0:
            raise ConfigurationError(f"must be positive, got {self.kappa}", key="kappa")


@dataclass(frozen=True, eq=False)
class Candidate:
    """One gated map cell z_i."""

    location: np.ndarray
    map_value: float
    weight: float
    cov: np.ndarray


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Gated candidate cells for a single measurement, in row-major cell order."""

    locations: np.ndarray
    map_values: np.ndarray
    covs: np.ndarray
    weights: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    sigma_eff: np.ndarray
    prior: PriorPosition
    measurement: Optional[MagMeasurement] = None
    underflow: bool = False

    def __len__(self) -> int:
        return int(self.locations.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def __iter__(self) -> Iterator[Candidate]:
        for index in range(len(self)):
            yield Candidate(
                location=self.locations[index],
                map_value=float(self.map_values[index]),
                weight=float(self.weights[index]),
                cov=self.covs[index],
            )

    def subset(self, keep: np.ndarray) -> "CandidateSet":
        # Restricts the set to the selected candidates; weights are left unnormalised
        return replace(
            self,
            locations=self.locations[keep],
            map_values=self.map_values[keep],
            covs=self.covs[keep],
            weights=self.weights[keep],
            rows=self.rows[keep],
            cols=self.cols[keep],
            sigma_eff=self.sigma_eff[keep],
        )


def window_cells(grid: MapGrid, centre: np.ndarray, cov: np.ndarray, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Row/column indices of every cell centre inside the gamma ellipse around ``centre``."""
    half_north = math.sqrt(gamma * cov[0, 0])
    half_east = math.sqrt(gamma * cov[1, 1])
    row_hi, col_lo = grid.fractional_index(np.array([centre[0] - half_north, centre[1] - half_east]))
    row_lo, col_hi = grid.fractional_index(np.array([centre[0] + half_north, centre[1] + half_east]))
    r0, r1 = max(0, int(math.floor(row_lo))), min(grid.n_rows - 1, int(math.ceil(row_hi)))
    c0, c1 = max(0, int(math.floor(col_lo))), min(grid.n_cols - 1, int(math.ceil(col_hi)))
    if r0 > r1 or c0 > c1:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    rows, cols = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()
    offsets = grid.cell_centres(rows, cols) - centre
    distance = np.einsum("ni,ij,nj->n", offsets, np.linalg.inv(cov), offsets)
    inside = distance <= gamma
    return rows[inside], cols[inside]


def effective_sigma(grid: MapGrid, rows: np.ndarray, cols: np.ndarray, sigma: float, resolution_aware: bool) -> np.ndarray:
    # Measurement sigma, optionally widened by the within-cell field spread
    if not resolution_aware:
        return np.full(rows.shape, float(sigma))
    quantisation = grid.gradient_magnitude[rows, cols] * grid.cell_size / math.sqrt(12.0)
    return np.sqrt(sigma ** 2 + quantisation ** 2)


def candidate_covariances(
    grid: MapGrid, rows: np.ndarray, cols: np.ndarray, sigma_eff: np.ndarray, prior_cov: np.ndarray, gamma: float
) -> np.ndarray:
    """R_i(sigma) = (sigma^2 / |grad m|^2) I, clamped between half a cell and the window semi-axis."""
    slope = grid.gradient_magnitude[rows, cols]
    lower = (grid.cell_size / 2.0) ** 2
    upper = max(lower, gamma * float(np.max(np.linalg.eigvalsh(prior_cov))))
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = np.where(slope > 0, sigma_eff ** 2 / slope ** 2, upper)
    variance = np.clip(variance, lower, upper)
    return variance[:, None, None] * np.eye(2)[None, :, :]


def window_candidates(
    grid: MapGrid, prior: PriorPosition, sigma: float, params: GateParams = GateParams()
) -> CandidateSet:
    """Every valid cell inside the search window, before the signal gate is applied."""
    if not grid.contains(prior.mean):
        raise MapBoundsError(float(prior.mean[0]), float(prior.mean[1]), "prior mean outside map")
    rows, cols = window_cells(grid, prior.mean, prior.cov, params.gamma)
    valid = grid.valid_mask[rows, cols]
    rows, cols = rows[valid], cols[valid]
    sigma_eff = effective_sigma(grid, rows, cols, sigma, params.resolution_aware)
    covs = candidate_covariances(grid, rows, cols, sigma_eff, prior.cov, params.gamma)
    count = rows.size
    return CandidateSet(
        locations=grid.cell_centres(rows, cols).reshape(count, 2),
        map_values=grid.values[rows, cols],
        covs=covs.reshape(count, 2, 2),
        weights=np.full(count, 1.0 / count) if count else np.empty(0),
        rows=rows,
        cols=cols,
        sigma_eff=sigma_eff,
        prior=prior,
    )


def signal_gate(window: CandidateSet, meas: MagMeasurement, kappa: float) -> CandidateSet:
    """Keep the window cells with |s - m(z_i)| <= kappa * sigma_eff; weights restart uniform."""
    matched = np.abs(meas.value - window.map_values) <= kappa * window.sigma_eff
    gated = window.subset(matched)
    count = len(gated)
    if count == 0:
        LOGGER.debug("No candidates gated for reading %.4f nT at t=%.1f", meas.value, meas.time)
    return replace(gated, weights=np.full(count, 1.0 / count) if count else np.empty(0), measurement=meas)


def gate_candidates(
    grid: MapGrid, prior: PriorPosition, meas: MagMeasurement, params: GateParams = GateParams()
) -> CandidateSet:
    """Collect every cell centre inside the search window whose value matches the reading."""
    return signal_gate(window_candidates(grid, prior, meas.sigma, params), meas, params.kappa)


def log_densities(cands: CandidateSet, prior: PriorPosition) -> np.ndarray:
    # log N(z_i; x^s, Sigma^s + R_i) for every candidate
    offsets = cands.locations - prior.mean
    innovation_covs = prior.cov[None, :, :] + cands.covs
    _, logdet = np.linalg.slogdet(innovation_covs)
    solved = np.linalg.solve(innovation_covs, offsets[:, :, None])[:, :, 0]
    mahalanobis = np.einsum("ni,ni->n", offsets, solved)
    return -0.5 * (mahalanobis + logdet + 2.0 * _LOG_2PI)


def pda_weights(cands: CandidateSet, prior: PriorPosition) -> CandidateSet:
    """Normalised association probabilities w_i computed in log space."""
    if cands.is_empty:
        raise ValueError("cannot weight an empty candidate set")
    log_density = log_densities(cands, prior)
    if not np.any(np.isfinite(log_density)):
        LOGGER.warning("PDA densities underflowed for %d candidates; using uniform weights", len(cands))
        return replace(cands, weights=np.full(len(cands), 1.0 / len(cands)), underflow=True)
    weights = np.exp(log_density - logsumexp(log_density))
    return replace(cands, weights=weights / weights.sum(), underflow=False)


def pda_estimate(cands: CandidateSet) -> PositionFix:
    """Weighted mean z_bar and spread-of-means covariance R_bar."""
    if cands.is_empty:
        raise ValueError("cannot estimate from an empty candidate set")
    weights = cands.weights
    mean = weights @ cands.locations
    spread = cands.locations - mean
    cov = np.einsum("n,nij->ij", weights, cands.covs) + np.einsum("n,ni,nj->ij", weights, spread, spread)
    return PositionFix(
        mean=mean,
        cov=0.5 * (cov + cov.T),
        time=cands.measurement.time if cands.measurement is not None else 0.0,
        n_candidates=len(cands),
    )


def pda_error(fix: PositionFix, truth: np.ndarray) -> float:
    # Euclidean distance between the PDA location and the true sensor location
    delta = np.asarray(fix.mean, dtype=float) - np.asarray(truth, dtype=float)
    return float(np.hypot(delta[0], delta[1]))


def single_scan_fix(
    grid: MapGrid, prior: PriorPosition, meas: MagMeasurement, params: GateParams = GateParams()
) -> Tuple[Optional[PositionFix], CandidateSet]:
    """Gate, weight and fuse one reading; the fix is None when nothing gates."""
    cands = gate_candidates(grid, prior, meas, params)
    if cands.is_empty:
        return None, cands
    weighted = pda_weights(cands, prior)
    return pda_estimate(weighted), weighted
