"""Viterbi map matching over a trellis of gated map cells."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import multivariate_normal, norm

from ..mapping.grid import MapGrid
from ..models import PositionFix
from .batch import VITERBI, Batch, MatchParams, MatchResult
from .pda import CandidateSet, gate_candidates, log_densities, pda_estimate

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trellis:
    """Log-likelihood terms of a discrete HMM.

    ``initial`` and ``emissions[k]`` are vectors over the states of column k;
    ``transitions[k]`` has shape (n_k, n_{k+1}). ``columns`` optionally ties
    each column to the map candidates it was built from.
    """

    initial: np.ndarray
    emissions: List[np.ndarray]
    transitions: List[np.ndarray]
    columns: List[CandidateSet] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.transitions) != len(self.emissions) - 1:
            raise ValueError("a trellis needs one transition matrix between consecutive columns")
        if self.initial.shape != self.emissions[0].shape:
            raise ValueError("initial log-prior must match the first column")
        for k, matrix in enumerate(self.transitions):
            expected = (self.emissions[k].size, self.emissions[k + 1].size)
            if matrix.shape != expected:
                raise ValueError(f"transition {k} has shape {matrix.shape}, expected {expected}")

    def __len__(self) -> int:
        return len(self.emissions)

    @property
    def has_empty_column(self) -> bool:
        return any(column.size == 0 for column in self.emissions)


def _emission_log_likelihood(cands: CandidateSet) -> np.ndarray:
    # log N(s_k; m(z_i), sigma_eff^2)
    return norm.logpdf(cands.measurement.value, loc=cands.map_values, scale=cands.sigma_eff)


def _transition_log_likelihood(
    origin: np.ndarray, target: np.ndarray, displacement: np.ndarray, cov: np.ndarray
) -> np.ndarray:
    # log N(z_{k+1} - z_k - d_k; 0, C_k) for every (origin, target) pair
    delta = target[None, :, :] - origin[:, None, :] - displacement
    if delta.size == 0:
        return np.empty(delta.shape[:2])
    return np.reshape(multivariate_normal.logpdf(delta, mean=np.zeros(2), cov=cov), delta.shape[:2])


def build_trellis(batch: Batch, grid: MapGrid, params: MatchParams = MatchParams()) -> Trellis:
    """Gate each epoch around its INS prior and score emissions and transitions."""
    columns = [gate_candidates(grid, prior, meas, params.gate) for meas, prior in zip(batch.measurements, batch.priors)]
    emissions = [_emission_log_likelihood(column) for column in columns]
    step_covs = batch.step_covariances(grid.cell_size, params.floor_fraction)
    transitions = [
        _transition_log_likelihood(columns[k].locations, columns[k + 1].locations, batch.displacements[k], step_covs[k])
        for k in range(len(batch) - 1)
    ]
    initial = log_densities(columns[0], batch.priors[0]) if not columns[0].is_empty else np.empty(0)
    return Trellis(initial=initial, emissions=emissions, transitions=transitions, columns=columns)


def viterbi_decode(trellis: Trellis) -> Tuple[List[int], float, np.ndarray]:
    """Most likely state sequence, its log-likelihood and the final column scores.

    Ties resolve to the lowest state index. Scores accumulate in the same
    order as ``path_log_likelihood`` so the two agree exactly.
    """
    if trellis.has_empty_column:
        raise ValueError("cannot decode a trellis with an empty column")
    delta = trellis.initial + trellis.emissions[0]
    backpointers = []
    for transition, emission in zip(trellis.transitions, trellis.emissions[1:]):
        scores = delta[:, None] + transition
        best = np.argmax(scores, axis=0)
        backpointers.append(best)
        delta = scores[best, np.arange(scores.shape[1])] + emission
    state = int(np.argmax(delta))
    path = [state]
    for best in reversed(backpointers):
        state = int(best[state])
        path.append(state)
    path.reverse()
    return path, float(np.max(delta)), delta


def path_log_likelihood(trellis: Trellis, path: Sequence[int]) -> float:
    # Log-likelihood of one explicit state sequence through the trellis
    score = trellis.initial[path[0]] + trellis.emissions[0][path[0]]
    for k in range(len(path) - 1):
        score = score + trellis.transitions[k][path[k], path[k + 1]]
        score = score + trellis.emissions[k + 1][path[k + 1]]
    return float(score)


def viterbi_mm(batch: Batch, grid: MapGrid, params: MatchParams = MatchParams()) -> MatchResult:
    """Maximum-likelihood candidate sequence for a batch.

    The fix sits at the final state of the best path; its covariance is the
    PDA spread over final states scoring within ``near_optimal_margin`` of
    the best, weighted by exp(score - best).
    """
    trellis = build_trellis(batch, grid, params)
    counts = [len(column) for column in trellis.columns]
    if trellis.has_empty_column:
        LOGGER.warning("Viterbi trellis has an empty column (candidates per epoch: %s)", counts)
        track = np.array([prior.mean for prior in batch.priors])
        return MatchResult(VITERBI, None, track, 1, False, counts)

    path, score, final_scores = viterbi_decode(trellis)
    track = np.array([trellis.columns[k].locations[state] for k, state in enumerate(path)])
    last = trellis.columns[-1]
    near = final_scores >= score - params.near_optimal_margin
    weights = np.exp(final_scores[near] - score)
    spread = pda_estimate(replace(last.subset(near), weights=weights / weights.sum()))
    fix = PositionFix(
        mean=track[-1].copy(),
        cov=spread.cov,
        time=batch.measurements[-1].time,
        n_candidates=len(last),
    )
    LOGGER.debug("Viterbi path log-likelihood %.4f over %d epochs", score, len(batch))
    return MatchResult(VITERBI, fix, track, 1, True, counts, [score])
