# src/core/thinning.py
"""
KSD estimators on weighted empirical measures and the greedy thinning loops.

All greedy variants share one loop: at iteration t the candidate minimizing

    k_p(x_i, x_i) + extra_t(i) + 2 * sum_{j<t} k_p(x_{pi_j}, x_i)

is appended to the selection. Only the n-vector of running sums is kept
between iterations, ties go to the lowest index and repeats are allowed.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from src.core.errors import (
    ConfigError,
    DimensionMismatchError,
    EmptySelectionError,
    UnselectablePoolError,
)
from src.core.stein_kernels import (
    SteinKernelParams,
    laplacian_kernel_diag,
    laplacian_kernel_row,
    resolve_bandwidth,
    stein_kernel_diag,
    stein_kernel_row,
    weighted_gram_sum,
)
from src.core.target_models import GaussianMixture, TargetModel
from src.core.utils import as_batch

logger = logging.getLogger(__name__)

LambdaRule = Literal["inverse_m", "inverse_log_m", "inverse_m_squared", "fixed"]


@dataclass
class CandidatePool:
    """
    Candidate points with everything the objectives need, evaluated once.

    Rows with a non-finite point, score or Laplacian term are flagged in
    `valid` and never selected. log_p may be -inf (unusable for the entropic
    objective only).
    """
    points: np.ndarray
    scores: np.ndarray
    log_p: np.ndarray
    lap_plus: np.ndarray
    kernel: SteinKernelParams
    valid: np.ndarray = field(init=False)
    diag: np.ndarray = field(init=False)

    def __post_init__(self):
        self.points, _ = as_batch(self.points)
        n, d = self.points.shape
        if n == 0:
            raise EmptySelectionError("candidate pool is empty")
        self.scores = np.asarray(self.scores, dtype=float)
        self.log_p = np.asarray(self.log_p, dtype=float).reshape(-1)
        self.lap_plus = np.asarray(self.lap_plus, dtype=float).reshape(-1)
        if self.scores.shape != (n, d) or self.log_p.shape != (n,) or self.lap_plus.shape != (n,):
            raise DimensionMismatchError("pool points, scores, log_p and lap_plus must describe the same rows")
        self.kernel.require_unit_c()

        self.valid = (
            np.all(np.isfinite(self.points), axis=1)
            & np.all(np.isfinite(self.scores), axis=1)
            & np.isfinite(self.lap_plus)
            & ~np.isnan(self.log_p)
        )
        n_bad = int(n - self.valid.sum())
        if n_bad:
            logger.warning(f"⚠️ {n_bad}/{n} candidate rows are not finite and are masked out of selection")
        with np.errstate(invalid="ignore", over="ignore"):
            self.diag = stein_kernel_diag(self.scores, self.kernel)

    @classmethod
    def from_model(cls, model: TargetModel, points, kernel: Optional[SteinKernelParams] = None,
                   ell: Optional[float] = None, beta: Optional[float] = None) -> "CandidatePool":
        """
        Evaluates score, log density and truncated Laplacian of `model` on `points`.

        Args:
            model: Target providing score / log density / Hessian diagonal
            points: (n, d) candidates
            kernel: Full kernel parameters; when omitted, `ell` (median heuristic
                if None) and `beta` build them

        Returns:
            CandidatePool
        """
        points, _ = as_batch(points, model.dim)
        if kernel is None:
            bandwidth = resolve_bandwidth(points, ell)
            kernel = SteinKernelParams(ell=bandwidth) if beta is None else SteinKernelParams(ell=bandwidth, beta=beta)
        with np.errstate(all="ignore"):
            scores = model.score(points)
            log_p = model.log_density_unnorm(points)
            lap_plus = model.lap_plus(points)
        return cls(points=points, scores=scores, log_p=log_p, lap_plus=lap_plus, kernel=kernel)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def row(self, i: int) -> np.ndarray:
        return stein_kernel_row(self.points[i], self.scores[i], self.points, self.scores, self.kernel)


@dataclass
class ThinningResult:
    indices: np.ndarray
    objective_trace: np.ndarray
    ksd_trace: np.ndarray
    method: str = "st"
    lam: float = 0.0

    @property
    def m(self) -> int:
        return int(self.indices.shape[0])

    def selected(self, pool: CandidatePool) -> np.ndarray:
        return pool.points[self.indices]


# ── estimators ──────────────────────────────────────────────────────────────

def _selection_weights(pool: CandidatePool, indices=None, weights=None):
    """(support indices, weights on the support) for an index multiset or a weight vector."""
    if indices is not None and weights is not None:
        raise ValueError("pass either indices or weights, not both")
    if weights is not None:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != (pool.n,):
            raise DimensionMismatchError(f"expected {pool.n} weights, got {w.shape[0]}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        support = np.flatnonzero(w > 0)
        if support.size == 0:
            raise EmptySelectionError("empty selection")
        return support, w[support]

    idx = np.asarray([] if indices is None else indices, dtype=int).reshape(-1)
    if idx.size == 0:
        raise EmptySelectionError("empty selection")
    if idx.min() < 0 or idx.max() >= pool.n:
        raise IndexError(f"selection index out of range [0, {pool.n})")
    counts = np.bincount(idx, minlength=pool.n)
    support = np.flatnonzero(counts)
    return support, counts[support] / idx.size


def ksd_squared(pool: CandidatePool, indices: Optional[Sequence[int]] = None, *, weights=None) -> float:
    """
    V-statistic sum_ij w_i w_j k_p(x_i, x_j) of an index multiset (uniform
    weights 1/m with multiplicity) or of a weight vector over the pool.
    """
    support, w = _selection_weights(pool, indices, weights)
    pts, sc = pool.points[support], pool.scores[support]
    value = weighted_gram_sum(pts, sc, w, pts, sc, w, pool.kernel)
    # PSD kernel: anything below zero is rounding
    if value < 0.0:
        if value < -1e-10 * max(1.0, float(np.max(pool.diag[support]))):
            logger.warning(f"⚠️ KSD^2 estimate is negative beyond rounding ({value:.3e})")
        value = 0.0
    return value


def entropic_ksd_squared(pool: CandidatePool, weights=None, lam: float = 0.0, *,
                         indices: Optional[Sequence[int]] = None) -> float:
    """
    KSD^2 - lam * sum_i w_i log p(x_i).

    log p is only known up to a constant, so values are comparable between
    measures supported on the same pool only. +inf when a weighted point has
    log p = -inf.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    support, w = _selection_weights(pool, indices, weights)
    base = ksd_squared(pool, weights=weights) if weights is not None else ksd_squared(pool, indices)
    if lam == 0.0:
        return base
    log_p = pool.log_p[support]
    if np.any(np.isneginf(log_p)):
        return math.inf
    return base - lam * math.fsum(w * log_p)


def l_ksd_squared(pool: CandidatePool, indices: Sequence[int]) -> float:
    """KSD^2 with the truncated Laplacian added on the diagonal: KSD^2 + (1/m^2) sum_i lap_plus(x_i)."""
    idx = np.asarray(indices, dtype=int).reshape(-1)
    base = ksd_squared(pool, idx)
    return base + math.fsum(pool.lap_plus[idx]) / idx.size ** 2


# ── greedy selection ────────────────────────────────────────────────────────

def _greedy(n: int, m: int, diag: np.ndarray, valid: np.ndarray,
            row: Callable[[int], np.ndarray], extra: Optional[Callable[[int], np.ndarray]] = None):
    if m < 1:
        raise ValueError(f"m must be >= 1 (got {m})")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise UnselectablePoolError("no candidate row is finite")
    if m > n_valid:
        logger.warning(f"⚠️ m = {m} exceeds the {n_valid} selectable candidates; points will repeat")

    running = np.zeros(n)
    indices = np.empty(m, dtype=int)
    objective_trace = np.empty(m)
    ksd_trace = np.empty(m)
    total = 0.0

    for t in range(1, m + 1):
        objective = diag + 2.0 * running
        if extra is not None:
            objective = objective + extra(t)
        objective = np.where(valid, objective, np.inf)
        i = int(np.argmin(objective))
        if not np.isfinite(objective[i]):
            raise UnselectablePoolError(f"no candidate has a finite objective at iteration {t}")

        total += 2.0 * running[i] + diag[i]
        indices[t - 1] = i
        objective_trace[t - 1] = objective[i]
        ksd_trace[t - 1] = total / t ** 2
        if t < m:
            running += row(i)

    return indices, objective_trace, ksd_trace


def stein_thin(pool: CandidatePool, m: int) -> ThinningResult:
    """Greedy KSD minimization over the pool (m selections, repeats allowed)."""
    indices, obj, ksd = _greedy(pool.n, m, pool.diag, pool.valid, pool.row)
    logger.debug(f"Stein thinning: {m} points from {pool.n}, final KSD^2 {ksd[-1]:.6g}")
    return ThinningResult(indices=indices, objective_trace=obj, ksd_trace=ksd, method="st", lam=0.0)


def regularized_stein_thin(pool: CandidatePool, m: int, lam: Optional[float] = None) -> ThinningResult:
    """
    Greedy minimization of the regularized objective: the Stein diagonal plus
    lap_plus(x_i) - lam * t * log p(x_i) plus twice the running sum.

    Args:
        pool: Candidate pool
        m: Number of selections
        lam: Entropic weight, 1/m when omitted

    Returns:
        ThinningResult (ksd_trace is the plain KSD^2 of each prefix)
    """
    lam = 1.0 / m if lam is None else float(lam)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")

    if lam > 0.0:
        selectable = pool.valid & np.isfinite(pool.log_p)
        if not np.any(selectable):
            raise UnselectablePoolError("every candidate has log p = -inf")
        log_p = np.where(selectable, pool.log_p, 0.0)

        def extra(t: int) -> np.ndarray:
            return pool.lap_plus - lam * t * log_p
    else:
        selectable = pool.valid

        def extra(t: int) -> np.ndarray:
            return pool.lap_plus

    indices, obj, ksd = _greedy(pool.n, m, pool.diag, selectable, pool.row, extra)
    logger.debug(f"Regularized Stein thinning: {m} points from {pool.n}, lambda={lam:.4g}, final KSD^2 {ksd[-1]:.6g}")
    return ThinningResult(indices=indices, objective_trace=obj, ksd_trace=ksd, method="rst", lam=lam)


def laplacian_stein_thin(model: GaussianMixture, points, m: int, kernel: Optional[SteinKernelParams] = None,
                         ell: Optional[float] = None) -> ThinningResult:
    """
    Greedy selection under the Laplacian-operator Stein kernel (IMQ, beta = 1/2).

    Candidates where the mixture density underflows to zero are masked out.
    The returned ksd_trace is the discrepancy under that kernel.
    """
    points, _ = as_batch(points, model.dim)
    kernel = kernel or SteinKernelParams(ell=resolve_bandwidth(points, ell), beta=0.5)
    curv = model.density_curvature(points)

    keep = np.flatnonzero(curv.p > 0.0)
    if keep.size == 0:
        raise UnselectablePoolError("the density vanishes at every candidate")
    if keep.size < points.shape[0]:
        logger.warning(f"⚠️ {points.shape[0] - keep.size} candidates with zero density are masked out")
    sub = points[keep]
    sub_curv = type(curv)(p=curv.p[keep], grad_p=curv.grad_p[keep], hess_diag_p=curv.hess_diag_p[keep])

    diag = laplacian_kernel_diag(sub_curv, kernel)
    valid = np.isfinite(diag)

    def row(i: int) -> np.ndarray:
        return laplacian_kernel_row(sub[i], sub_curv.at(i), sub, sub_curv, kernel)

    indices, obj, ksd = _greedy(sub.shape[0], m, diag, valid, row)
    return ThinningResult(indices=keep[indices], objective_trace=obj, ksd_trace=ksd, method="laplacian", lam=0.0)


def lambda_for_rule(rule: LambdaRule, m: int, value: Optional[float] = None) -> float:
    """Entropic weight from a named rate in m."""
    if rule == "inverse_m":
        return 1.0 / m
    if rule == "inverse_log_m":
        if m < 2:
            raise ConfigError("lambda rule inverse_log_m needs m >= 2")
        return 1.0 / math.log(m)
    if rule == "inverse_m_squared":
        return 1.0 / m ** 2
    if rule == "fixed":
        if value is None or value < 0:
            raise ConfigError("lambda rule 'fixed' needs a nonnegative value")
        return float(value)
    raise ConfigError(f"unknown lambda rule: {rule}")


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool


def lemma3_bound_check(pool: CandidatePool, result: ThinningResult, lam: float) -> BoundCheck:
    """
    Compares KSD^2 of a regularized selection with the greedy error bound

        min_w KSD^2(w) + (1 + log m)/m * (max diag + max lap_plus) + 2 lam max |log p|

    where the minimum over weights is replaced by the uniform weighting of the
    pool (an upper bound on it, so the comparison stays valid).
    """
    m = result.m
    lhs = ksd_squared(pool, result.indices)
    valid = pool.valid & np.isfinite(pool.log_p)
    uniform = np.where(valid, 1.0, 0.0)
    uniform /= uniform.sum()
    best_weighted = ksd_squared(pool, weights=uniform)
    rhs = (
        best_weighted
        + (1.0 + math.log(m)) / m * (float(np.max(pool.diag[valid])) + float(np.max(pool.lap_plus[valid])))
        + 2.0 * lam * float(np.max(np.abs(pool.log_p[valid])))
    )
    return BoundCheck(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs))
