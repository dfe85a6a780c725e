import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from conftest import plane_grid
from magnav.errors import ConfigurationError, MapBoundsError
from magnav.mapping import MapGrid, sample
from magnav.matching import CandidateSet, GateParams, gate_candidates, pda_error, pda_estimate, pda_weights, single_scan_fix
from magnav.matching.pda import window_cells
from magnav.models import MagMeasurement, PriorPosition


def _random_prior(rng, extent):
    mean = rng.uniform(0.2 * extent, 0.8 * extent, size=2)
    a = rng.normal(size=(2, 2)) * rng.uniform(50.0, 250.0)
    return PriorPosition(mean, a @ a.T + 100.0 * np.eye(2))


def _brute_force_gate(grid, prior, meas, params):
    inverse = np.linalg.inv(prior.cov)
    selected = set()
    for row in range(grid.n_rows):
        for col in range(grid.n_cols):
            offset = grid.cell_centre(row, col) - prior.mean
            inside = offset @ inverse @ offset <= params.gamma
            matched = abs(meas.value - grid.values[row, col]) <= params.kappa * meas.sigma
            if inside and matched and grid.valid_mask[row, col]:
                selected.add((row, col))
    return selected


def test_default_gate_is_the_99_percent_chi_square_quantile():
    params = GateParams()
    assert params.gamma == pytest.approx(9.2103, abs=1e-4)
    assert params.kappa == 3.0
    assert GateParams(gamma=4.0).gamma == 4.0


@pytest.mark.parametrize("kwargs", [{"gate_probability": 1.0}, {"gamma": -1.0}, {"kappa": 0.0}])
def test_invalid_gate_parameters(kwargs):
    with pytest.raises(ConfigurationError):
        GateParams(**kwargs)


def test_gate_matches_exhaustive_scan_on_random_maps():
    rng = np.random.default_rng(2024)
    params = GateParams()
    for _ in range(1000):
        values = rng.normal(0.0, 5.0, size=(20, 20))
        if rng.uniform() < 0.2:
            values[rng.integers(0, 20), rng.integers(0, 20)] = -99999.0
        grid = MapGrid(-38.0, 144.5, 50.0, values)
        prior = _random_prior(rng, 1000.0)
        meas = MagMeasurement(float(rng.normal(0.0, 5.0)), float(rng.uniform(0.5, 3.0)))
        cands = gate_candidates(grid, prior, meas, params)
        assert set(zip(cands.rows.tolist(), cands.cols.tolist())) == _brute_force_gate(grid, prior, meas, params)
        np.testing.assert_array_equal(cands.map_values, grid.values[cands.rows, cands.cols])


def test_window_cells_follow_a_rotated_ellipse():
    grid = plane_grid(n_rows=30, n_cols=30)
    cov = np.array([[90000.0, 60000.0], [60000.0, 90000.0]])
    centre = np.array([1500.0, 1500.0])
    rows, cols = window_cells(grid, centre, cov, 9.21)
    offsets = grid.cell_centres(rows, cols) - centre
    assert np.all(np.einsum("ni,ij,nj->n", offsets, np.linalg.inv(cov), offsets) <= 9.21)
    spread = np.cov(offsets.T)
    assert spread[0, 1] > 0


def test_resolution_aware_gate_is_a_superset(small_synthetic):
    prior = PriorPosition(np.array([4000.0, 4000.0]), 300.0 ** 2 * np.eye(2))
    meas = MagMeasurement(sample(small_synthetic, np.array([4020.0, 3970.0])), 0.05)
    plain = gate_candidates(small_synthetic, prior, meas, GateParams())
    aware = gate_candidates(small_synthetic, prior, meas, GateParams(resolution_aware=True))
    plain_cells = set(zip(plain.rows.tolist(), plain.cols.tolist()))
    aware_cells = set(zip(aware.rows.tolist(), aware.cols.tolist()))
    assert plain_cells <= aware_cells
    assert len(aware_cells) > len(plain_cells)
    assert np.all(aware.sigma_eff >= 0.05)


def test_weights_match_brute_force_densities():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        prior = _random_prior(rng, 1000.0)
        locations = prior.mean + rng.normal(0.0, 300.0, size=(n, 2))
        variances = rng.uniform(100.0, 5000.0, size=n)
        cands = CandidateSet(
            locations=locations,
            map_values=np.zeros(n),
            covs=variances[:, None, None] * np.eye(2),
            weights=np.full(n, 1.0 / n),
            rows=np.zeros(n, dtype=int),
            cols=np.zeros(n, dtype=int),
            sigma_eff=np.ones(n),
            prior=prior,
            measurement=MagMeasurement(0.0, 1.0, time=5.0),
        )
        weighted = pda_weights(cands, prior)
        densities = np.array(
            [multivariate_normal.pdf(z, mean=prior.mean, cov=prior.cov + v * np.eye(2)) for z, v in zip(locations, variances)]
        )
        expected = densities / densities.sum()
        np.testing.assert_allclose(weighted.weights, expected, rtol=1e-9)
        assert weighted.weights.sum() == pytest.approx(1.0, abs=1e-9)

        fix = pda_estimate(weighted)
        mean = sum(w * z for w, z in zip(expected, locations))
        cov = sum(w * (v * np.eye(2) + np.outer(z - mean, z - mean)) for w, z, v in zip(expected, locations, variances))
        np.testing.assert_allclose(fix.mean, mean, rtol=1e-9)
        np.testing.assert_allclose(fix.cov, cov, rtol=1e-9, atol=1e-9 * np.abs(cov).max())
        assert fix.n_candidates == n
        assert fix.time == 5.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_estimate_lies_inside_the_candidate_hull(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    prior = PriorPosition(np.zeros(2), 1e4 * np.eye(2))
    locations = rng.normal(0.0, 200.0, size=(n, 2))
    cands = CandidateSet(
        locations=locations,
        map_values=np.zeros(n),
        covs=np.repeat(2500.0 * np.eye(2)[None], n, axis=0),
        weights=np.full(n, 1.0 / n),
        rows=np.zeros(n, dtype=int),
        cols=np.zeros(n, dtype=int),
        sigma_eff=np.ones(n),
        prior=prior,
    )
    fix = pda_estimate(pda_weights(cands, prior))
    assert np.all(fix.mean >= locations.min(axis=0) - 1e-9)
    assert np.all(fix.mean <= locations.max(axis=0) + 1e-9)
    assert np.all(np.linalg.eigvalsh(fix.cov) >= 2500.0 - 1e-6)


def test_underflowing_densities_fall_back_to_uniform_weights():
    prior = PriorPosition(np.zeros(2), np.eye(2))
    cands = CandidateSet(
        locations=np.array([[1e200, 0.0], [0.0, 1e200]]),
        map_values=np.zeros(2),
        covs=np.repeat(np.eye(2)[None], 2, axis=0),
        weights=np.full(2, 0.5),
        rows=np.zeros(2, dtype=int),
        cols=np.zeros(2, dtype=int),
        sigma_eff=np.ones(2),
        prior=prior,
    )
    weighted = pda_weights(cands, prior)
    assert weighted.underflow
    np.testing.assert_array_equal(weighted.weights, [0.5, 0.5])


def test_unique_match_recovers_the_cell_centre(plane):
    truth = plane.cell_centre(20, 20)
    prior = PriorPosition(truth + np.array([180.0, -90.0]), 300.0 ** 2 * np.eye(2))
    meas = MagMeasurement(float(plane.values[20, 20]), 0.001, time=3.0)
    fix, cands = single_scan_fix(plane, prior, meas)
    assert len(cands) == 1
    np.testing.assert_array_equal(fix.mean, truth)
    assert pda_error(fix, truth) == 0.0
    # A single candidate keeps its own clamped covariance: half a cell squared
    np.testing.assert_allclose(fix.cov, 2500.0 * np.eye(2))


def test_nothing_gated_gives_no_fix(plane):
    prior = PriorPosition(np.array([2000.0, 2000.0]), 300.0 ** 2 * np.eye(2))
    fix, cands = single_scan_fix(plane, prior, MagMeasurement(0.0, 0.1))
    assert fix is None
    assert cands.is_empty
    with pytest.raises(ValueError):
        pda_estimate(cands)


def test_prior_off_the_map_raises(plane):
    with pytest.raises(MapBoundsError):
        gate_candidates(plane, PriorPosition(np.array([-500.0, 100.0]), np.eye(2)), MagMeasurement(50000.0, 1.0))


def test_candidate_covariances_are_clamped(small_synthetic):
    prior = PriorPosition(np.array([4000.0, 4000.0]), 300.0 ** 2 * np.eye(2))
    meas = MagMeasurement(sample(small_synthetic, np.array([4000.0, 4000.0])), 5.0)
    cands = gate_candidates(small_synthetic, prior, meas)
    variances = cands.covs[:, 0, 0]
    assert np.all(variances >= (small_synthetic.cell_size / 2.0) ** 2)
    assert np.all(variances <= GateParams().gamma * 300.0 ** 2 + 1e-6)
    np.testing.assert_array_equal(cands.covs[:, 0, 1], 0.0)


@pytest.mark.parametrize("delta", [(3.0, 4.0), (-5.0, 12.0), (0.0, 0.0)])
def test_pda_error_is_euclidean(delta):
    prior = PriorPosition(np.zeros(2), np.eye(2))
    cands = CandidateSet(
        locations=np.array([[10.0, 20.0]]),
        map_values=np.zeros(1),
        covs=np.eye(2)[None],
        weights=np.ones(1),
        rows=np.zeros(1, dtype=int),
        cols=np.zeros(1, dtype=int),
        sigma_eff=np.ones(1),
        prior=prior,
    )
    fix = pda_estimate(cands)
    assert pda_error(fix, np.array([10.0, 20.0]) + np.array(delta)) == pytest.approx(np.hypot(*delta))


def test_candidates_iterate_as_cells(plane):
    prior = PriorPosition(np.array([2000.0, 2000.0]), 300.0 ** 2 * np.eye(2))
    meas = MagMeasurement(float(plane.values[20, 20]), 0.5)
    cands = gate_candidates(plane, prior, meas)
    listed = list(cands)
    assert len(listed) == len(cands) > 1
    assert listed[0].map_value == cands.map_values[0]
    assert sum(c.weight for c in listed) == pytest.approx(1.0)


def _cells(cands):
    return set(zip(cands.rows.tolist(), cands.cols.tolist()))


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    gamma=st.floats(0.5, 25.0),
    shrink=st.floats(0.01, 1.0),
    kappa=st.floats(0.5, 5.0),
)
def test_shrinking_the_gate_never_adds_candidates(seed, gamma, shrink, kappa):
    rng = np.random.default_rng(seed)
    grid = MapGrid(-38.0, 144.5, 50.0, rng.normal(0.0, 5.0, size=(20, 20)))
    prior = _random_prior(rng, 1000.0)
    meas = MagMeasurement(float(rng.normal(0.0, 5.0)), float(rng.uniform(0.5, 3.0)))
    wide = _cells(gate_candidates(grid, prior, meas, GateParams(gamma=gamma, kappa=kappa)))
    narrow_window = _cells(gate_candidates(grid, prior, meas, GateParams(gamma=gamma * shrink, kappa=kappa)))
    narrow_signal = _cells(gate_candidates(grid, prior, meas, GateParams(gamma=gamma, kappa=kappa * shrink)))
    assert narrow_window <= wide
    assert narrow_signal <= wide


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    scale=st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]),
    resolution_aware=st.booleans(),
)
def test_estimate_ignores_a_common_rescaling_of_map_and_noise(seed, scale, resolution_aware):
    rng = np.random.default_rng(seed)
    values = rng.normal(0.0, 5.0, size=(20, 20))
    prior = _random_prior(rng, 1000.0)
    grid = MapGrid(-38.0, 144.5, 50.0, values)
    scaled = MapGrid(-38.0, 144.5, 50.0, scale * values)
    reading = sample(grid, prior.mean) + float(rng.normal(0.0, 1.0))
    sigma = float(rng.uniform(0.5, 3.0))
    params = GateParams(resolution_aware=resolution_aware)

    fix, cands = single_scan_fix(grid, prior, MagMeasurement(reading, sigma), params)
    scaled_fix, scaled_cands = single_scan_fix(scaled, prior, MagMeasurement(scale * reading, scale * sigma), params)
    assert _cells(scaled_cands) == _cells(cands)
    if fix is None:
        assert scaled_fix is None
        return
    np.testing.assert_allclose(scaled_fix.mean, fix.mean, rtol=1e-9)
    np.testing.assert_allclose(scaled_fix.cov, fix.cov, rtol=1e-9, atol=1e-9 * np.abs(fix.cov).max())
