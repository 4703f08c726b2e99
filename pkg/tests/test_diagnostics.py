"""
Tests for the sample-quality metrics and the pathology checks
(thresholds, weight sweep, concentrated samples).

    pytest tests/test_diagnostics.py -v
"""

import math

import numpy as np
import pytest

from src.core.diagnostics import (
    WeightSweepResult,
    band_count,
    concentration_check,
    energy_mmd,
    estimate_eta,
    lambda_search,
    mode_proportions,
    nearest_center,
    pathology_bounds,
    saddle_band_halfwidth,
    score_threshold,
    truncated_mixture_clusters,
    weight_sweep,
)
from src.core.errors import DimensionMismatchError, EmptySelectionError
from src.core.samplers import exact_mixture_sample
from src.core.stein_kernels import SteinKernelParams
from src.core.target_models import GaussianMixture, example_mixture_spec
from src.core.thinning import CandidatePool, ksd_squared

UNIT = SteinKernelParams(ell=1.0, beta=0.5)


# ── energy MMD ──────────────────────────────────────────────────────────────

class TestEnergyMmd:

    def setup_method(self):
        rng = np.random.default_rng(0)
        self.a = rng.normal(size=(50, 2))
        self.b = rng.normal(loc=0.5, size=(40, 2))

    def test_identical_samples(self):
        assert energy_mmd(self.a, self.a) == 0.0

    def test_symmetric(self):
        assert energy_mmd(self.a, self.b) == pytest.approx(energy_mmd(self.b, self.a), rel=1e-12)

    def test_small_sample_oracle(self):
        a = [0.0, 1.0, 3.0]
        b = [0.5, 2.0]
        d_ab = sum(abs(x - y) for x in a for y in b) / 6
        d_aa = sum(abs(x - y) for x in a for y in a) / 9
        d_bb = sum(abs(x - y) for x in b for y in b) / 4
        expected = math.sqrt(2 * d_ab - d_aa - d_bb)
        assert energy_mmd(np.array(a)[:, None], np.array(b)[:, None]) == pytest.approx(expected, rel=1e-12)

    def test_unbiased_variant(self):
        a = np.array([[0.0], [1.0], [3.0]])
        b = np.array([[0.5], [2.0]])
        d_ab = np.abs(a - b.T).mean()
        d_aa = np.abs(a - a.T).sum() / 6
        d_bb = np.abs(b - b.T).sum() / 2
        expected = math.sqrt(max(0.0, 2 * d_ab - d_aa - d_bb))
        assert energy_mmd(a, b, unbiased=True) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_separated_samples_are_far(self):
        assert energy_mmd(self.a, self.a + 10.0) > energy_mmd(self.a, self.b)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            energy_mmd(self.a, np.zeros((3, 3)))

    def test_empty_sample(self):
        with pytest.raises(EmptySelectionError):
            energy_mmd(self.a, np.empty((0, 2)))


# ── mode occupancy ──────────────────────────────────────────────────────────

class TestModeProportions:

    def setup_method(self):
        self.centers = np.array([[-3.0, 0.0], [3.0, 0.0]])

    def test_all_at_first_center(self):
        np.testing.assert_array_equal(mode_proportions(np.tile(self.centers[0], (5, 1)), self.centers), [1.0, 0.0])

    def test_tie_goes_to_lowest_index(self):
        assert nearest_center(np.zeros((1, 2)), self.centers).tolist() == [0]

    def test_exact_sample_proportions(self):
        sample = exact_mixture_sample(example_mixture_spec(mu=3.0, sigma=1.0, w=0.2, dim=2), 100_000, seed=1)
        props = mode_proportions(sample, self.centers)
        assert props.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(props, [0.2, 0.8], atol=0.01)

    def test_band_count(self):
        pts = np.array([[0.1, 5.0], [-0.3, 0.0], [0.6, 1.0], [2.0, 0.0]])
        assert band_count(pts, 0.5) == 2
        assert band_count(pts, 0.5, axis=1) == 2


# ── pathology thresholds ────────────────────────────────────────────────────

class TestPathologyBounds:

    def test_closed_form_fields(self):
        bounds = pathology_bounds(example_mixture_spec(mu=3.0, sigma=1.0), UNIT, mc_n=2000)
        assert bounds.s0_max == pytest.approx(2.2409, abs=1e-4)
        assert bounds.z_max == pytest.approx(0.58758, abs=1e-5)
        assert bounds.applicable

    def test_helpers_agree(self):
        assert score_threshold(3.0, 1.0) == pytest.approx((3 * math.sqrt(8) - math.log(3 + math.sqrt(8))) / 3)
        assert saddle_band_halfwidth(2.0, 1.0) == pytest.approx(math.acosh(2.0) / 2.0)

    def test_zero_score_level_reduction(self):
        bounds = pathology_bounds(example_mixture_spec(mu=3.0, sigma=1.0), UNIT, s0=0.0, mc_n=5000, seed=2)
        assert bounds.m_threshold == pytest.approx(1.0 + bounds.e_score_sq / 2.0, rel=1e-12)

    def test_monte_carlo_score_norm_of_normal(self):
        # mu -> 0 collapses the mixture to a standard normal
        bounds = pathology_bounds(example_mixture_spec(mu=1e-9, sigma=1.0), UNIT, mc_n=20000, seed=3)
        assert abs(bounds.e_score_sq - 2.0) < 3 * bounds.e_score_sq_se
        assert not bounds.applicable
        assert bounds.z_max is None

    def test_deterministic(self):
        spec = example_mixture_spec(mu=2.0, sigma=1.0)
        assert pathology_bounds(spec, UNIT, mc_n=1000, seed=5) == pathology_bounds(spec, UNIT, mc_n=1000, seed=5)

    def test_requires_symmetric_pair(self):
        with pytest.raises(ValueError):
            pathology_bounds(example_mixture_spec(mu=3.0, sigma=1.0, dim=1).model_copy(
                update={"means": [[-3.0], [2.0]]}), UNIT)


# ── weight sweep ────────────────────────────────────────────────────────────

class TestWeightSweep:

    def setup_method(self):
        self.spec = example_mixture_spec(mu=3.0, sigma=1.0, w=0.2, dim=2)
        self.model = GaussianMixture(self.spec)
        self.left, self.right = truncated_mixture_clusters(self.spec, 3000, radius_sd=2.0, seed=0)
        self.grid = np.round(np.arange(0.1, 0.9 + 1e-9, 0.05), 10)

    def test_clusters_are_truncated(self):
        assert np.all(np.linalg.norm(self.left - [-3.0, 0.0], axis=1) <= 2.0)
        assert np.all(np.linalg.norm(self.right - [3.0, 0.0], axis=1) <= 2.0)
        assert self.right.shape[0] > self.left.shape[0]

    def test_unregularized_argmin_is_central(self):
        result = weight_sweep(self.left, self.right, self.model, self.grid, lam=0.0)
        assert 0.4 <= result.argmin_w <= 0.6

    def test_values_are_quadratic_in_w(self):
        result = weight_sweep(self.left, self.right, self.model, self.grid, lam=0.0, kernel=UNIT)
        coef = np.polyfit(result.weights, result.ksd_values, 2)
        resid = result.ksd_values - np.polyval(coef, result.weights)
        assert np.max(np.abs(resid)) < 1e-10
        assert coef[0] > 0

    def test_matches_weighted_ksd_on_union(self):
        left, right = self.left[:60], self.right[:80]
        pool = CandidatePool.from_model(self.model, np.vstack([left, right]), kernel=UNIT)
        result = weight_sweep(left, right, self.model, [0.3, 0.7], kernel=UNIT)
        for w, value in zip(result.weights, result.ksd_values):
            weights = np.concatenate([np.full(60, w / 60), np.full(80, (1 - w) / 80)])
            assert value == pytest.approx(ksd_squared(pool, weights=weights), rel=1e-10)

    def test_singleton_grid(self):
        assert weight_sweep(self.left, self.right, self.model, [0.2]).argmin_w == 0.2

    def test_grid_outside_unit_interval(self):
        with pytest.raises(ValueError):
            weight_sweep(self.left, self.right, self.model, [0.5, 1.5])

    def test_lambda_search_reaches_true_weight(self):
        found = lambda_search(self.left, self.right, self.model, self.grid, target_w=0.2)
        assert abs(found.best_argmin - 0.2) <= 0.05 + 1e-9
        assert found.lambdas.shape == (81,)

    def test_eta(self):
        result = WeightSweepResult(weights=np.array([0.5]), ksd_values=np.array([0.0]), argmin_w=0.5, lam=0.0,
                                   ksd_left=1.5, ksd_right=1.0)
        assert estimate_eta(result) == pytest.approx(0.5)
        assert estimate_eta(weight_sweep(self.left, self.right, self.model, self.grid)) < 1.0


# ── concentrated samples ────────────────────────────────────────────────────

class TestConcentrationCheck:

    def setup_method(self):
        self.spec = example_mixture_spec(mu=3.0, sigma=1.0, w=0.5, dim=2)

    def test_saddle_against_iid_draws(self):
        check = concentration_check(self.spec, [0.0, 0.0], ms=[1, 4, 20], kernel=UNIT, replicates=2000, seed=1)
        rows = {row.m: row for row in check.rows}
        # m copies of the saddle: KSD^2 = 2 beta d / ell^2 whatever m, L-KSD^2 adds 8 / m
        assert rows[4].ksd_concentrated == pytest.approx(2.0)
        assert rows[4].l_ksd_concentrated == pytest.approx(4.0)
        assert rows[1].ksd_below
        assert all(row.l_ksd_above for row in check.rows)
        assert check.density_condition is True

    def test_reproducible(self):
        a = concentration_check(self.spec, [0.0, 0.0], ms=[3], kernel=UNIT, replicates=200, seed=4)
        b = concentration_check(self.spec, [0.0, 0.0], ms=[3], kernel=UNIT, replicates=200, seed=4)
        assert a.rows == b.rows
