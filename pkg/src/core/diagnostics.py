# src/core/diagnostics.py
"""
Sample-quality metrics and the checks behind the two KSD pathologies.

    energy_mmd           distance-kernel MMD between two samples
    mode_proportions     nearest-center partition of a sample
    pathology_bounds     sample-size and score thresholds of the saddle pathology
    weight_sweep         KSD^2_lambda of w-weighted cluster unions over a grid of w
    concentration_check  KSD^2 / L-KSD^2 of m copies of one point vs iid expectations
"""
import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from src.core.config import GRAM_CHUNK_ROWS
from src.core.errors import DimensionMismatchError, EmptySelectionError
from src.core.samplers import exact_mixture_sample
from src.core.stein_kernels import (
    SteinKernelParams,
    _langevin_from_diff,
    resolve_bandwidth,
    stein_kernel_diag,
    weighted_gram_sum,
)
from src.core.target_models import (
    GaussianMixture,
    GaussianMixtureSpec,
    TargetModel,
    symmetric_mixture_parameters,
)

logger = logging.getLogger(__name__)


def _as_points(sample) -> np.ndarray:
    arr = np.asarray(getattr(sample, "points", sample), dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == 0:
        raise EmptySelectionError("empty sample")
    return arr


# ========================================
# MMD (distance-induced kernel)
# ========================================

def _distance_sum(a: np.ndarray, b: np.ndarray, chunk: int = GRAM_CHUNK_ROWS) -> float:
    partials = []
    for start in range(0, a.shape[0], chunk):
        partials.extend(cdist(a[start:start + chunk], b, metric="euclidean").sum(axis=1))
    return math.fsum(partials)


def energy_mmd(sample_a, sample_b, unbiased: bool = False) -> float:
    """
    MMD under k(x, y) = ||x|| + ||y|| - ||x - y||:

        MMD^2 = 2 E||X - Y|| - E||X - X'|| - E||Y - Y'||

    V-statistic by default; `unbiased=True` drops the diagonal of the
    within-sample terms. Returns sqrt(max(0, MMD^2)).
    """
    a, b = _as_points(sample_a), _as_points(sample_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"samples live in different dimensions ({a.shape[1]} vs {b.shape[1]})")
    n, m = a.shape[0], b.shape[0]
    if unbiased and (n < 2 or m < 2):
        raise EmptySelectionError("the unbiased estimator needs at least 2 points per sample")

    d_ab = _distance_sum(a, b) / (n * m)
    if unbiased:
        d_aa = _distance_sum(a, a) / (n * (n - 1))
        d_bb = _distance_sum(b, b) / (m * (m - 1))
    else:
        d_aa = _distance_sum(a, a) / (n * n)
        d_bb = _distance_sum(b, b) / (m * m)
    mmd2 = 2.0 * d_ab - d_aa - d_bb
    return math.sqrt(max(0.0, mmd2))


# ========================================
# Mode occupancy
# ========================================

def nearest_center(points, centers) -> np.ndarray:
    """Index of the nearest center per point (lowest index on ties)."""
    return np.argmin(cdist(_as_points(points), np.asarray(centers, dtype=float)), axis=1)


def mode_proportions(sample, mode_centers) -> np.ndarray:
    centers = np.asarray(mode_centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] == 0:
        raise ValueError("mode_centers must be a nonempty (K, d) matrix")
    labels = nearest_center(sample, centers)
    return np.bincount(labels, minlength=centers.shape[0]) / labels.shape[0]


def band_count(sample, halfwidth: float, axis: int = 0) -> int:
    """Number of points with |x_axis| < halfwidth."""
    return int(np.sum(np.abs(_as_points(sample)[:, axis]) < halfwidth))


# ========================================
# Pathology thresholds
# ========================================

@dataclass(frozen=True)
class PathologyBounds:
    m_threshold: float
    s0_max: Optional[float]
    z_max: Optional[float]
    e_score_sq: float
    e_score_sq_se: float

    @property
    def applicable(self) -> bool:
        return self.s0_max is not None


def saddle_band_halfwidth(mu: float, sigma: float) -> Optional[float]:
    """(sigma^2 / mu) arcosh(mu / sigma); None when mu <= sigma (no saddle band)."""
    nu = mu / sigma
    if nu <= 1.0:
        return None
    return sigma ** 2 / mu * math.acosh(nu)


def score_threshold(mu: float, sigma: float) -> Optional[float]:
    nu = mu / sigma
    if nu <= 1.0:
        return None
    root = math.sqrt(nu ** 2 - 1.0)
    return (nu * root - math.log(nu + root)) / mu


def pathology_bounds(spec: GaussianMixtureSpec, params: SteinKernelParams, s0: float = 0.0,
                     mc_n: int = 10000, seed: int = 0) -> PathologyBounds:
    """
    Thresholds of the saddle pathology for a symmetric two-component mixture.

    Args:
        spec: Components at (-mu, 0) and (mu, 0) with a shared isotropic variance
        params: Kernel parameters (beta, ell)
        s0: Score-norm level of the concentrated sample
        mc_n: Exact draws for the Monte Carlo estimate of E||s_p(X)||^2
        seed: Seed of those draws

    Returns:
        PathologyBounds (s0_max / z_max are None when mu <= sigma)
    """
    mu, sigma = symmetric_mixture_parameters(spec)
    model = GaussianMixture(spec)
    draws = exact_mixture_sample(spec, mc_n, seed).points
    sq = np.sum(model.score(draws) ** 2, axis=1)
    e_sq = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(mc_n))

    d, beta, ell = spec.dim, params.beta, params.ell
    m_threshold = 1.0 + (e_sq - s0 ** 2) / (2.0 * beta * d / ell ** 2 + 2.0 * beta * s0 / ell + s0 ** 2)

    s0_max = score_threshold(mu, sigma)
    z_max = saddle_band_halfwidth(mu, sigma)
    if s0_max is None:
        logger.warning(f"⚠️ mu/sigma = {mu / sigma:.3g} <= 1: the mixture has no saddle, s0_max and z_max are undefined")
    return PathologyBounds(m_threshold=m_threshold, s0_max=s0_max, z_max=z_max, e_score_sq=e_sq, e_score_sq_se=se)


# ========================================
# Weight sweep over two clusters
# ========================================

def truncated_mixture_clusters(spec: GaussianMixtureSpec, n: int, radius_sd: float = 2.0,
                               seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    n exact draws split by nearest component of a two-component mixture, each
    part truncated to a ball of radius_sd standard deviations around its center.
    """
    if len(spec.weights) != 2:
        raise ValueError("cluster truncation expects a two-component mixture")
    means = np.asarray(spec.means, dtype=float)
    sd = np.sqrt(spec.variance_matrix().max(axis=1))
    draws = exact_mixture_sample(spec, n, seed).points
    labels = nearest_center(draws, means)
    dist = np.linalg.norm(draws - means[labels], axis=1)
    keep = dist <= radius_sd * sd[labels]
    left, right = draws[keep & (labels == 0)], draws[keep & (labels == 1)]
    if left.shape[0] == 0 or right.shape[0] == 0:
        raise EmptySelectionError("a truncated cluster is empty")
    return left, right


@dataclass
class WeightSweepResult:
    weights: np.ndarray
    ksd_values: np.ndarray
    argmin_w: float
    lam: float
    # block means: KSD^2(Q_L), KSD^2(Q_R), cross term, mean log p per cluster
    ksd_left: float = 0.0
    ksd_right: float = 0.0
    cross: float = 0.0
    mean_log_p_left: float = 0.0
    mean_log_p_right: float = 0.0


@dataclass(frozen=True)
class _SweepBlocks:
    a: float
    b: float
    c: float
    log_l: float
    log_r: float

    def values(self, weights: np.ndarray, lam: float) -> np.ndarray:
        w = weights
        quad = w ** 2 * self.a + (1.0 - w) ** 2 * self.b + 2.0 * w * (1.0 - w) * self.c
        return quad - lam * (w * self.log_l + (1.0 - w) * self.log_r)


def _sweep_blocks(left: np.ndarray, right: np.ndarray, target: TargetModel,
                  kernel: SteinKernelParams) -> _SweepBlocks:
    sl, sr = target.score(left), target.score(right)
    wl = np.full(left.shape[0], 1.0 / left.shape[0])
    wr = np.full(right.shape[0], 1.0 / right.shape[0])
    return _SweepBlocks(
        a=weighted_gram_sum(left, sl, wl, left, sl, wl, kernel),
        b=weighted_gram_sum(right, sr, wr, right, sr, wr, kernel),
        c=weighted_gram_sum(left, sl, wl, right, sr, wr, kernel),
        log_l=float(np.mean(target.log_density_unnorm(left))),
        log_r=float(np.mean(target.log_density_unnorm(right))),
    )


def _resolve_clusters(pool_left, pool_right, target: TargetModel, kernel: Optional[SteinKernelParams]):
    left, right = _as_points(pool_left), _as_points(pool_right)
    if left.shape[1] != target.dim or right.shape[1] != target.dim:
        raise DimensionMismatchError("cluster dimension does not match the target")
    if kernel is None:
        kernel = SteinKernelParams(ell=resolve_bandwidth(np.vstack([left, right])))
    return left, right, kernel


def weight_sweep(pool_left, pool_right, target: TargetModel, weights: Sequence[float], lam: float = 0.0,
                 kernel: Optional[SteinKernelParams] = None) -> WeightSweepResult:
    """
    KSD^2_lambda of the measure putting w/|L| on each left point and (1-w)/|R|
    on each right point, for every w of the grid. The three Gram blocks are
    evaluated once; each grid value is then a quadratic in w.
    """
    grid = np.asarray(weights, dtype=float)
    if grid.size == 0 or np.any((grid < 0) | (grid > 1)):
        raise ValueError("weight grid must be a nonempty subset of [0, 1]")
    left, right, kernel = _resolve_clusters(pool_left, pool_right, target, kernel)
    blocks = _sweep_blocks(left, right, target, kernel)
    values = blocks.values(grid, lam)
    return WeightSweepResult(
        weights=grid, ksd_values=values, argmin_w=float(grid[int(np.argmin(values))]), lam=lam,
        ksd_left=blocks.a, ksd_right=blocks.b, cross=blocks.c,
        mean_log_p_left=blocks.log_l, mean_log_p_right=blocks.log_r,
    )


def estimate_eta(result: WeightSweepResult) -> float:
    """|KSD^2(Q_L) / KSD^2(Q_R) - 1|."""
    if result.ksd_right == 0.0:
        return math.inf
    return abs(result.ksd_left / result.ksd_right - 1.0)


@dataclass
class LambdaSearchResult:
    lambdas: np.ndarray
    argmins: np.ndarray
    best_lambda: float
    best_argmin: float
    target_w: float


def lambda_search(pool_left, pool_right, target: TargetModel, weights: Sequence[float], target_w: float,
                  lambdas: Optional[Sequence[float]] = None, kernel: Optional[SteinKernelParams] = None
                  ) -> LambdaSearchResult:
    """
    Scans lambda over a grid (log-spaced from 1e-4 to 1 by default) and keeps
    the one whose sweep argmin is closest to target_w (smallest lambda on ties).
    """
    grid = np.asarray(weights, dtype=float)
    lams = np.logspace(-4, 0, 81) if lambdas is None else np.asarray(lambdas, dtype=float)
    left, right, kernel = _resolve_clusters(pool_left, pool_right, target, kernel)
    blocks = _sweep_blocks(left, right, target, kernel)

    argmins = np.array([grid[int(np.argmin(blocks.values(grid, lam)))] for lam in lams])
    best = int(np.argmin(np.abs(argmins - target_w)))
    logger.debug(f"Lambda search: best lambda {lams[best]:.4g} -> argmin w {argmins[best]:.3f}")
    return LambdaSearchResult(lambdas=lams, argmins=argmins, best_lambda=float(lams[best]),
                              best_argmin=float(argmins[best]), target_w=target_w)


# ========================================
# Concentrated samples vs iid samples
# ========================================

@dataclass
class ConcentrationRow:
    m: int
    ksd_concentrated: float
    ksd_expected: float
    ksd_expected_se: float
    l_ksd_concentrated: float
    l_ksd_expected: float
    l_ksd_expected_se: float

    @property
    def ksd_below(self) -> bool:
        return self.ksd_concentrated < self.ksd_expected - 3.0 * self.ksd_expected_se

    @property
    def l_ksd_above(self) -> bool:
        return self.l_ksd_concentrated > self.l_ksd_expected + 3.0 * self.l_ksd_expected_se


@dataclass
class ConcentrationCheck:
    point: np.ndarray
    rows: List[ConcentrationRow] = field(default_factory=list)
    density_condition: Optional[bool] = None


def _replicate_v_statistics(draws: np.ndarray, scores: np.ndarray, lap: np.ndarray,
                            kernel: SteinKernelParams, chunk: int = 256):
    """Per-replicate KSD^2 and L-KSD^2 V-statistics of (R, m, d) iid draws."""
    r, m, d = draws.shape
    ksd = np.empty(r)
    for start in range(0, r, chunk):
        x, s = draws[start:start + chunk], scores[start:start + chunk]
        gram = _langevin_from_diff(x[:, :, None, :] - x[:, None, :, :], s[:, :, None, :], s[:, None, :, :],
                                   kernel.beta, kernel.ell, d)
        ksd[start:start + chunk] = gram.sum(axis=(1, 2)) / m ** 2
    return ksd, ksd + lap.sum(axis=1) / m ** 2


def concentration_check(spec: GaussianMixtureSpec, point, ms: Sequence[int], kernel: SteinKernelParams,
                        replicates: int = 10000, seed: int = 0) -> ConcentrationCheck:
    """
    For each m, compares KSD^2 and L-KSD^2 of m copies of `point` with Monte
    Carlo estimates (and standard errors) of their expectations over m iid
    draws from the target.

    The density condition p(x0) < Lap+ p(x0) / (E||s_p||^2 + E Lap+ log p)
    is evaluated with the same draws.
    """
    kernel.require_unit_c()
    model = GaussianMixture(spec)
    x0 = np.asarray(point, dtype=float)
    s0 = model.score(x0)
    diag0 = stein_kernel_diag(s0, kernel)
    lap0 = float(model.lap_plus(x0))

    result = ConcentrationCheck(point=x0)
    rng_seed = seed
    for m in ms:
        draws = exact_mixture_sample(spec, replicates * m, rng_seed).points
        rng_seed += 1
        scores = model.score(draws)
        lap = model.lap_plus(draws)
        ksd, lksd = _replicate_v_statistics(draws.reshape(replicates, m, -1), scores.reshape(replicates, m, -1),
                                            lap.reshape(replicates, m), kernel)
        root = math.sqrt(replicates)
        result.rows.append(ConcentrationRow(
            m=int(m),
            ksd_concentrated=diag0,
            ksd_expected=float(ksd.mean()),
            ksd_expected_se=float(ksd.std(ddof=1) / root),
            l_ksd_concentrated=diag0 + lap0 / m,
            l_ksd_expected=float(lksd.mean()),
            l_ksd_expected_se=float(lksd.std(ddof=1) / root),
        ))

    draws = exact_mixture_sample(spec, replicates, seed + 10_000).points
    e_sq = float(np.mean(np.sum(model.score(draws) ** 2, axis=1)))
    e_lap = float(np.mean(model.lap_plus(draws)))
    curv = model.density_curvature(x0)
    lap_p = float(np.sum(np.clip(curv.hess_diag_p[0], 0.0, None)))
    result.density_condition = bool(curv.p[0] < lap_p / (e_sq + e_lap))
    return result
