import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crop, straight_batch
from magnav.mapping import SyntheticMapSpec, synthetic_map
from magnav.matching import Batch, MatchParams, Trellis, build_trellis, path_log_likelihood, viterbi_decode, viterbi_mm
from magnav.matching.pda import GateParams, gate_candidates
from magnav.models import MagMeasurement

PLAIN = MatchParams(gate=GateParams())


@pytest.fixture(scope="module")
def terrain():
    return synthetic_map(SyntheticMapSpec(n_rows=96, n_cols=96, seed=8))


def _random_trellis(rng, n_epochs, max_states):
    sizes = rng.integers(1, max_states + 1, size=n_epochs)
    return Trellis(
        initial=rng.normal(size=sizes[0]),
        emissions=[rng.normal(size=n) for n in sizes],
        transitions=[rng.normal(size=(sizes[k], sizes[k + 1])) for k in range(n_epochs - 1)],
    )


def test_viterbi_equals_exhaustive_maximum_on_random_trellises():
    rng = np.random.default_rng(99)
    for _ in range(200):
        trellis = _random_trellis(rng, int(rng.integers(1, 7)), 5)
        path, score, _ = viterbi_decode(trellis)
        best = max(
            path_log_likelihood(trellis, candidate)
            for candidate in itertools.product(*(range(e.size) for e in trellis.emissions))
        )
        assert score == best
        assert path_log_likelihood(trellis, path) == score


def test_three_by_three_instance():
    rng = np.random.default_rng(3)
    trellis = Trellis(
        initial=rng.normal(size=3),
        emissions=[rng.normal(size=3) for _ in range(3)],
        transitions=[rng.normal(size=(3, 3)) for _ in range(2)],
    )
    scored = {p: path_log_likelihood(trellis, p) for p in itertools.product(range(3), repeat=3)}
    assert len(scored) == 27
    path, _, _ = viterbi_decode(trellis)
    assert tuple(path) == max(scored, key=scored.get)


def test_ties_resolve_to_the_lowest_state():
    trellis = Trellis(np.zeros(3), [np.zeros(3)] * 3, [np.zeros((3, 3))] * 2)
    path, score, final = viterbi_decode(trellis)
    assert path == [0, 0, 0]
    assert score == 0.0
    np.testing.assert_array_equal(final, np.zeros(3))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"initial": np.zeros(2), "emissions": [np.zeros(3)], "transitions": []},
        {"initial": np.zeros(2), "emissions": [np.zeros(2), np.zeros(2)], "transitions": []},
        {"initial": np.zeros(2), "emissions": [np.zeros(2), np.zeros(3)], "transitions": [np.zeros((2, 2))]},
    ],
)
def test_malformed_trellises_are_rejected(kwargs):
    with pytest.raises(ValueError):
        Trellis(**kwargs)


def test_empty_column_cannot_be_decoded():
    trellis = Trellis(np.zeros(2), [np.zeros(2), np.empty(0)], [np.zeros((2, 0))])
    assert trellis.has_empty_column
    with pytest.raises(ValueError):
        viterbi_decode(trellis)


def test_trellis_columns_are_the_gated_candidates(small_synthetic):
    batch, _ = straight_batch(small_synthetic, 48, 30, 4, sigma=2.0)
    trellis = build_trellis(batch, small_synthetic, PLAIN)
    for k, (meas, prior) in enumerate(zip(batch.measurements, batch.priors)):
        expected = gate_candidates(small_synthetic, prior, meas, PLAIN.gate)
        np.testing.assert_array_equal(trellis.columns[k].locations, expected.locations)
        assert trellis.emissions[k].shape == (len(expected),)
    assert [t.shape for t in trellis.transitions] == [
        (len(trellis.columns[k]), len(trellis.columns[k + 1])) for k in range(len(batch) - 1)
    ]


def test_unique_candidates_recover_the_truth(plane):
    batch, truth = straight_batch(plane, 20, 5, 6)
    result = viterbi_mm(batch, plane, PLAIN)
    assert result.has_fix and result.converged
    np.testing.assert_array_equal(result.smoothed_track, truth)
    np.testing.assert_array_equal(result.fix.mean, truth[-1])
    assert result.fix.time == batch.measurements[-1].time
    assert result.candidate_counts == [1] * 6
    assert result.objective_history == [pytest.approx(path_log_likelihood(build_trellis(batch, plane, PLAIN), [0] * 6))]


def test_motion_picks_between_ambiguous_cells(plane):
    batch, truth = straight_batch(plane, 20, 5, 5, sigma=0.2)
    result = viterbi_mm(batch, plane, PLAIN)
    assert max(result.candidate_counts) > 1
    assert np.max(np.linalg.norm(result.smoothed_track - truth, axis=1)) <= plane.cell_size * 1.5


def test_empty_epoch_gives_no_fix(plane):
    batch, _ = straight_batch(plane, 20, 5, 3)
    measurements = list(batch.measurements)
    measurements[1] = MagMeasurement(0.0, 0.001, measurements[1].time)
    broken = Batch(measurements, batch.priors, batch.displacements, batch.motion_covs)
    result = viterbi_mm(broken, plane, PLAIN)
    assert not result.has_fix
    assert result.candidate_counts == [1, 0, 1]
    np.testing.assert_array_equal(result.smoothed_track, [p.mean for p in batch.priors])


@settings(max_examples=20, deadline=None)
@given(di=st.integers(-6, 6), dj=st.integers(-6, 6))
def test_decoded_track_moves_with_the_map(terrain, di, dj):
    here = crop(terrain, 16, 16, 64)
    there = crop(terrain, 16 + di, 16 + dj, 64)
    shift = np.array([di, -dj]) * terrain.cell_size
    batch, _ = straight_batch(here, 32, 20, 6, sigma=0.05)

    base = viterbi_mm(batch, here, PLAIN)
    moved = viterbi_mm(batch.translated(shift), there, PLAIN)
    assert moved.candidate_counts == base.candidate_counts
    assert moved.has_fix == base.has_fix
    if base.has_fix:
        np.testing.assert_allclose(moved.smoothed_track, base.smoothed_track + shift, atol=1e-6)
        np.testing.assert_allclose(moved.fix.cov, base.fix.cov, rtol=1e-6, atol=1e-6)
        assert moved.objective_history == pytest.approx(base.objective_history, rel=1e-9)
