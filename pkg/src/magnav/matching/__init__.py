"""Map matching: single-reading PDA, map quality metrics and batch matchers."""

from ..mapping.grid import MapGrid
from .batch import ALGORITHMS, PMHT, VITERBI, Batch, MatchParams, MatchResult, batch_from_dict, load_batch
from .pda import (
    Candidate,
    CandidateSet,
    GateParams,
    gate_candidates,
    pda_error,
    pda_estimate,
    pda_weights,
    single_scan_fix,
)
from .pmht import pmht_mm
from .quality import QualityRaster, SearchWindow, SweepResult, mfv, noise_resolution_sweep, pda_error_map
from .viterbi import Trellis, build_trellis, path_log_likelihood, viterbi_decode, viterbi_mm

__all__ = [
    "ALGORITHMS",
    "PMHT",
    "VITERBI",
    "Batch",
    "Candidate",
    "CandidateSet",
    "GateParams",
    "MatchParams",
    "MatchResult",
    "QualityRaster",
    "SearchWindow",
    "SweepResult",
    "Trellis",
    "batch_from_dict",
    "build_trellis",
    "gate_candidates",
    "load_batch",
    "match_batch",
    "mfv",
    "noise_resolution_sweep",
    "path_log_likelihood",
    "pda_error",
    "pda_error_map",
    "pda_estimate",
    "pda_weights",
    "pmht_mm",
    "single_scan_fix",
    "viterbi_decode",
    "viterbi_mm",
]


def match_batch(batch: Batch, grid: MapGrid, algorithm: str = PMHT, params: MatchParams = MatchParams()) -> MatchResult:
    """Dispatch to the named batch matcher."""
    if algorithm == PMHT:
        return pmht_mm(batch, grid, params)
    if algorithm == VITERBI:
        return viterbi_mm(batch, grid, params)
    raise ValueError(f"unknown matching algorithm {algorithm!r}; expected one of {ALGORITHMS}")
