"""
Tests for the IMQ base kernel, the Langevin Stein kernel and the
Laplacian-operator kernel.

    pytest tests/test_stein_kernels.py -v
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.errors import DimensionMismatchError, KernelParamsError, SingularDensityError
from src.core.stein_kernels import (
    DensityCurvature,
    SteinKernelParams,
    imq_derivative_stack,
    imq_eval,
    langevin_stein_kernel,
    laplacian_kernel_diag,
    laplacian_kernel_row,
    laplacian_stein_kernel,
    median_heuristic,
    resolve_bandwidth,
    stein_kernel_diag,
    stein_kernel_matrix,
    stein_kernel_row,
    weighted_gram_sum,
)
from src.core.target_models import GaussianMixture, example_mixture_spec

finite = st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False)


# ── IMQ base kernel ─────────────────────────────────────────────────────────

class TestImqEval:

    def setup_method(self):
        self.params = SteinKernelParams(ell=1.0, beta=0.5)

    def test_identity_case(self):
        ev = imq_eval([0.3, -1.2, 4.0], [0.3, -1.2, 4.0], self.params)
        assert ev.value == 1.0
        assert np.all(ev.grad_x == 0.0)

    def test_one_bandwidth_apart(self):
        params = SteinKernelParams(ell=2.5, beta=0.5)
        assert imq_eval([0.0], [2.5], params).value == pytest.approx(2 ** -0.5, rel=1e-12)

    def test_gradients_match_finite_differences(self):
        params = SteinKernelParams(ell=1.5, beta=0.5)
        x, y = np.array([0.0, 0.0]), np.array([1.0, 2.0])
        ev = imq_eval(x, y, params)
        h = 1e-5
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd_x = (imq_eval(x + e, y, params).value - imq_eval(x - e, y, params).value) / (2 * h)
            fd_y = (imq_eval(x, y + e, params).value - imq_eval(x, y - e, params).value) / (2 * h)
            assert ev.grad_x[j] == pytest.approx(fd_x, rel=1e-6)
            assert ev.grad_y[j] == pytest.approx(fd_y, rel=1e-6)

    def test_cross_divergence_matches_finite_differences(self):
        params = SteinKernelParams(ell=1.5, beta=0.3)
        x, y = np.array([0.2, -0.4]), np.array([1.0, 0.7])
        h = 1e-4
        total = 0.0
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            # d/dy_j of d/dx_j k
            total += (imq_eval(x, y + e, params).grad_x[j] - imq_eval(x, y - e, params).grad_x[j]) / (2 * h)
        assert imq_eval(x, y, params).cross_div == pytest.approx(total, rel=1e-6)

    def test_general_offset_value(self):
        params = SteinKernelParams(ell=1.0, beta=0.5, c=4.0)
        assert imq_eval([0.0], [0.0], params).value == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            imq_eval([0.0, 1.0], [0.0], self.params)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            SteinKernelParams(ell=0.0)
        with pytest.raises(ValueError):
            SteinKernelParams(ell=1.0, beta=1.0)
        with pytest.raises(ValueError):
            SteinKernelParams(ell=1.0, gamma=2.0)


# ── Langevin Stein kernel ───────────────────────────────────────────────────

def _stein_kernel_from_parts(x, sx, y, sy, params):
    """k_p assembled from the base-kernel derivatives: <grad_x, grad_y>k + grad_x k . sy + grad_y k . sx + k sx.sy."""
    ev = imq_eval(x, y, params)
    return ev.cross_div + np.dot(ev.grad_x, sy) + np.dot(ev.grad_y, sx) + ev.value * np.dot(sx, sy)


class TestLangevinSteinKernel:

    def setup_method(self):
        self.params = SteinKernelParams(ell=1.0, beta=0.5)

    def test_stationary_point_diagonal(self):
        assert langevin_stein_kernel([1.0, 2.0], [0.0, 0.0], [1.0, 2.0], [0.0, 0.0], self.params) == pytest.approx(2.0)

    def test_standard_normal_diagonal(self):
        assert langevin_stein_kernel([1.0], [-1.0], [1.0], [-1.0], self.params) == pytest.approx(2.0)

    def test_matches_assembly_from_base_kernel(self):
        x, y = np.array([0.0]), np.array([1.0])
        sx, sy = -x, -y
        expected = _stein_kernel_from_parts(x, sx, y, sy, self.params)
        assert langevin_stein_kernel(x, sx, y, sy, self.params) == pytest.approx(expected, abs=1e-10)

    def test_matches_assembly_random(self):
        rng = np.random.default_rng(3)
        params = SteinKernelParams(ell=0.7, beta=0.35)
        for _ in range(20):
            x, y, sx, sy = rng.normal(size=(4, 3))
            expected = _stein_kernel_from_parts(x, sx, y, sy, params)
            assert langevin_stein_kernel(x, sx, y, sy, params) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(finite, min_size=8, max_size=8))
    def test_symmetric_under_swap(self, vals):
        x, sx, y, sy = (np.array(vals[i:i + 2]) for i in range(0, 8, 2))
        assert langevin_stein_kernel(x, sx, y, sy, self.params) == langevin_stein_kernel(y, sy, x, sx, self.params)

    def test_unit_offset_required(self):
        with pytest.raises(KernelParamsError):
            langevin_stein_kernel([0.0], [0.0], [1.0], [0.0], SteinKernelParams(ell=1.0, c=2.0))

    def test_score_shape_checked(self):
        with pytest.raises(DimensionMismatchError):
            langevin_stein_kernel([0.0, 1.0], [0.0], [1.0, 0.0], [0.0, 0.0], self.params)

    def test_bounded_on_score_ball(self):
        """|s| <= s0 on both arguments bounds k_p by 2 beta d / ell^2 + 2 beta s0 / ell + s0^2."""
        rng = np.random.default_rng(11)
        params = SteinKernelParams(ell=1.3, beta=0.5)
        s0, d = 1.5, 3
        bound = 2 * params.beta * d / params.ell ** 2 + 2 * params.beta * s0 / params.ell + s0 ** 2
        for _ in range(500):
            x, y = rng.normal(scale=2.0, size=(2, d))
            sx, sy = rng.normal(size=(2, d))
            sx *= s0 * rng.uniform() / np.linalg.norm(sx)
            sy *= s0 * rng.uniform() / np.linalg.norm(sy)
            assert langevin_stein_kernel(x, sx, y, sy, params) <= bound + 1e-12


class TestSteinKernelDiag:

    def test_zero_score(self):
        assert stein_kernel_diag(np.zeros(2), SteinKernelParams(ell=1.0)) == pytest.approx(2.0)

    def test_formula(self):
        assert stein_kernel_diag(np.array([3.0, 4.0]), SteinKernelParams(ell=2.0)) == pytest.approx(25.5)

    def test_matches_full_kernel_under_mixture(self, example_mixture):
        rng = np.random.default_rng(0)
        params = SteinKernelParams(ell=1.7)
        for x in rng.normal(scale=3.0, size=(20, 2)):
            s = example_mixture.score(x)
            assert stein_kernel_diag(s, params) == pytest.approx(langevin_stein_kernel(x, s, x, s, params), rel=1e-12)

    def test_batch(self):
        scores = np.array([[0.0, 0.0], [3.0, 4.0]])
        np.testing.assert_allclose(stein_kernel_diag(scores, SteinKernelParams(ell=2.0)), [0.5, 25.5])

    def test_offset_must_be_one(self):
        with pytest.raises(KernelParamsError):
            stein_kernel_diag(np.zeros(2), SteinKernelParams(ell=1.0, c=0.5))


class TestSteinIdentity:
    """E_p[k_p(X, y)] = 0: the empirical mean is within 4 standard errors of 0."""

    @pytest.mark.parametrize("y0", [-2.0, -0.5, 0.0, 0.7, 3.0])
    def test_standard_normal(self, y0):
        rng = np.random.default_rng(2024)
        n = 100_000
        xs = rng.standard_normal((n, 1))
        y = np.array([y0])
        vals = stein_kernel_row(y, -y, xs, -xs, SteinKernelParams(ell=1.0))
        assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(n)


class TestBlocks:

    def setup_method(self):
        rng = np.random.default_rng(5)
        self.params = SteinKernelParams(ell=1.1)
        self.x = rng.normal(size=(7, 2))
        self.y = rng.normal(size=(5, 2))
        self.sx = -self.x
        self.sy = -self.y

    def test_row_and_matrix_agree_with_pointwise(self):
        mat = stein_kernel_matrix(self.x, self.sx, self.y, self.sy, self.params)
        for i in range(7):
            np.testing.assert_allclose(stein_kernel_row(self.x[i], self.sx[i], self.y, self.sy, self.params), mat[i], rtol=1e-13)
            for j in range(5):
                assert mat[i, j] == pytest.approx(langevin_stein_kernel(self.x[i], self.sx[i], self.y[j], self.sy[j], self.params), rel=1e-12)

    def test_weighted_sum_independent_of_chunking(self):
        wx = np.full(7, 1 / 7)
        wy = np.full(5, 1 / 5)
        naive = sum(wx[i] * wy[j] * langevin_stein_kernel(self.x[i], self.sx[i], self.y[j], self.sy[j], self.params)
                    for i in range(7) for j in range(5))
        for chunk in (1, 3, 512):
            assert weighted_gram_sum(self.x, self.sx, wx, self.y, self.sy, wy, self.params, chunk=chunk) == pytest.approx(naive, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=0.3, max_value=3.0))
    def test_gram_is_positive_semidefinite(self, seed, ell):
        rng = np.random.default_rng(seed)
        x = rng.normal(scale=2.0, size=(12, 2))
        s = rng.normal(size=(12, 2))
        gram = stein_kernel_matrix(x, s, x, s, SteinKernelParams(ell=ell))
        np.testing.assert_allclose(gram, gram.T, rtol=1e-12, atol=1e-12)
        eig = np.linalg.eigvalsh((gram + gram.T) / 2)
        assert eig.min() >= -1e-8 * max(1.0, eig.max())


# ── median heuristic ────────────────────────────────────────────────────────

class TestMedianHeuristic:

    def test_three_points(self):
        assert median_heuristic(np.array([[0.0], [1.0], [2.0]])) == 1.0

    def test_two_points(self):
        assert median_heuristic(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)

    def test_matches_brute_force(self):
        pts = np.random.default_rng(1).standard_normal((200, 2))
        dists = [np.linalg.norm(pts[i] - pts[j]) for i in range(200) for j in range(i + 1, 200)]
        assert median_heuristic(pts, cap=200) == pytest.approx(float(np.median(dists)), rel=1e-14)

    def test_subsample_is_reproducible(self):
        pts = np.random.default_rng(2).standard_normal((3000, 2))
        assert median_heuristic(pts, cap=500) == median_heuristic(pts, cap=500)

    def test_identical_points_fall_back(self, caplog):
        assert median_heuristic(np.ones((10, 3))) == 1.0
        assert "falling back" in caplog.text

    def test_needs_two_points(self):
        with pytest.raises(KernelParamsError):
            median_heuristic(np.zeros((1, 2)))

    def test_accepts_sample_objects(self):
        class Holder:
            points = np.array([[0.0], [1.0], [2.0]])
        assert median_heuristic(Holder()) == 1.0

    def test_scaled_median(self):
        pts = np.array([[0.0], [1.0], [2.0]])
        assert resolve_bandwidth(pts, scale=2.0) == 2.0
        assert resolve_bandwidth(pts, ell=0.7, scale=2.0) == 0.7
        with pytest.raises(KernelParamsError):
            resolve_bandwidth(pts, scale=0.0)


# ── Laplacian-operator kernel ───────────────────────────────────────────────

def _imq_half(dx, ell):
    return (1.0 + dx ** 2 / ell ** 2) ** -0.5


class TestImqDerivativeStack:
    """1-d derivatives of the beta = 1/2 IMQ kernel against extrapolated differences of the entry below."""

    def setup_method(self):
        self.ell = 1.3
        self.x, self.y = 0.4, -0.5
        self.h = 1e-2

    def _stack(self, x, y):
        delta = np.array([[x - y]])
        k = _imq_half(delta, self.ell)
        return imq_derivative_stack(delta, k, self.ell)

    def _central(self, key, wrt, h):
        if wrt == "x":
            return (self._stack(self.x + h, self.y)[key] - self._stack(self.x - h, self.y)[key]) / (2 * h)
        return (self._stack(self.x, self.y + h)[key] - self._stack(self.x, self.y - h)[key]) / (2 * h)

    def _fd(self, key, wrt):
        # Richardson step on the central difference of an analytic entry
        return (4 * self._central(key, wrt, self.h / 2) - self._central(key, wrt, self.h)) / 3

    @pytest.mark.parametrize("key,base,wrt", [
        ("dxk", "k", "x"),
        ("dyk", "k", "y"),
        ("dx2k", "dxk", "x"),
        ("dy2k", "dyk", "y"),
        ("dxdyk", "dxk", "y"),
        ("dx2dyk", "dx2k", "y"),
        ("dxdy2k", "dy2k", "x"),
        ("dx2dy2k", "dx2dyk", "y"),
    ])
    def test_derivative(self, key, base, wrt):
        exact = float(self._stack(self.x, self.y)[key][0, 0])
        assert exact == pytest.approx(float(self._fd(base, wrt)[0, 0]), rel=1e-6, abs=1e-9)


class TestLaplacianSteinKernel:

    def setup_method(self):
        self.model = GaussianMixture(example_mixture_spec(mu=1.5, sigma=1.0, w=0.4, dim=2))
        self.params = SteinKernelParams(ell=1.2, beta=0.5)
        self.rng = np.random.default_rng(9)

    def test_symmetric(self):
        for x, y in self.rng.normal(size=(10, 2, 2)):
            cx, cy = self.model.density_curvature(x).at(0), self.model.density_curvature(y).at(0)
            assert laplacian_stein_kernel(x, y, cx, cy, self.params) == pytest.approx(
                laplacian_stein_kernel(y, x, cy, cx, self.params), rel=1e-12)

    def test_row_and_diag_agree_with_pointwise(self):
        pts = self.rng.normal(size=(6, 2))
        curv = self.model.density_curvature(pts)
        row = laplacian_kernel_row(pts[0], curv.at(0), pts, curv, self.params)
        diag = laplacian_kernel_diag(curv, self.params)
        for j in range(6):
            assert row[j] == pytest.approx(laplacian_stein_kernel(pts[0], pts[j], curv.at(0), curv.at(j), self.params), rel=1e-12)
        assert diag[0] == pytest.approx(row[0], rel=1e-12)

    def test_zero_mean_under_target(self):
        n = 100_000
        from src.core.samplers import exact_mixture_sample
        draws = exact_mixture_sample(self.model.spec, n, seed=4).points
        curv = self.model.density_curvature(draws)
        y0 = np.array([0.3, -0.2])
        vals = laplacian_kernel_row(y0, self.model.density_curvature(y0).at(0), draws, curv, self.params)
        assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(n)

    def test_singular_density(self):
        zero = DensityCurvature(p=0.0, grad_p=np.zeros(2), hess_diag_p=np.zeros(2))
        one = self.model.density_curvature(np.zeros(2)).at(0)
        with pytest.raises(SingularDensityError):
            laplacian_stein_kernel(np.zeros(2), np.ones(2), zero, one, self.params)

    def test_requires_half_exponent(self):
        c = self.model.density_curvature(np.zeros(2)).at(0)
        with pytest.raises(KernelParamsError):
            laplacian_stein_kernel(np.zeros(2), np.ones(2), c, c, SteinKernelParams(ell=1.0, beta=0.3))
