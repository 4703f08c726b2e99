# src/core/stein_kernels.py
"""
IMQ base kernel, Langevin Stein kernel and the experimental Laplacian-operator
Stein kernel.

Conventions:
    k(x, y) = (c + ||x - y||^2 / ell^2)^(-beta)
    every closed form below (Langevin kernel, its diagonal, the Laplacian
    operator kernel) assumes c = 1.
"""
import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import pdist

from src.core.config import (
    DEFAULT_BETA,
    DEFAULT_C,
    FALLBACK_BANDWIDTH,
    GRAM_CHUNK_ROWS,
    MEDIAN_HEURISTIC_CAP,
    MEDIAN_HEURISTIC_SEED,
)
from src.core.errors import DimensionMismatchError, KernelParamsError, SingularDensityError
from src.core.utils import check_same_dim

logger = logging.getLogger(__name__)


class SteinKernelParams(BaseModel):
    """IMQ parameters (bandwidth ell, exponent beta, offset c)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    ell: float = Field(gt=0, description="Bandwidth")
    beta: float = Field(default=DEFAULT_BETA, gt=0, lt=1)
    c: float = Field(default=DEFAULT_C, gt=0)

    def require_unit_c(self):
        if self.c != 1.0:
            raise KernelParamsError(f"closed-form Stein kernel paths require c = 1 (got c = {self.c})")


@dataclass(frozen=True)
class KernelEval:
    value: float
    grad_x: np.ndarray
    grad_y: np.ndarray
    cross_div: float  # <grad_x, grad_y> k


def imq_eval(x, y, params: SteinKernelParams) -> KernelEval:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = check_same_dim(x, y)
    beta, ell = params.beta, params.ell

    diff = x - y
    r2 = float(np.dot(diff, diff))
    base = params.c + r2 / ell ** 2
    value = base ** (-beta)
    grad_x = -2.0 * beta / ell ** 2 * diff * base ** (-beta - 1.0)
    cross_div = (
        2.0 * beta * d / ell ** 2 * base ** (-beta - 1.0)
        - 4.0 * beta * (beta + 1.0) / ell ** 4 * r2 * base ** (-beta - 2.0)
    )
    return KernelEval(value=value, grad_x=grad_x, grad_y=-grad_x, cross_div=cross_div)


def _langevin_from_diff(diff, sx, sy, beta: float, ell: float, d: int):
    """Closed-form Langevin IMQ Stein kernel, broadcast over leading axes; diff = x - y."""
    r2 = np.sum(diff * diff, axis=-1)
    base = 1.0 + r2 / ell ** 2
    t_div = -4.0 * beta * (beta + 1.0) / ell ** 4 * r2 * base ** (-beta - 2.0)
    cross = np.sum((sx - sy) * diff, axis=-1)
    t_mix = 2.0 * beta / ell ** 2 * (d + cross) * base ** (-beta - 1.0)
    t_score = np.sum(sx * sy, axis=-1) * base ** (-beta)
    return t_div + t_mix + t_score


def langevin_stein_kernel(x, sx, y, sy, params: SteinKernelParams) -> float:
    params.require_unit_c()
    x, sx, y, sy = (np.asarray(a, dtype=float) for a in (x, sx, y, sy))
    d = check_same_dim(x, y)
    if sx.shape != x.shape or sy.shape != y.shape:
        raise DimensionMismatchError("scores must have the same shape as their points")
    return float(_langevin_from_diff(x - y, sx, sy, params.beta, params.ell, d))


def stein_kernel_row(x, sx, points: np.ndarray, scores: np.ndarray, params: SteinKernelParams) -> np.ndarray:
    """k_p(x, points[i]) for every i, as an n-vector."""
    x = np.asarray(x, dtype=float)
    d = check_same_dim(x, points)
    return _langevin_from_diff(x[None, :] - points, np.asarray(sx, dtype=float)[None, :], scores,
                               params.beta, params.ell, d)


def stein_kernel_matrix(xs: np.ndarray, sxs: np.ndarray, ys: np.ndarray, sys_: np.ndarray,
                        params: SteinKernelParams) -> np.ndarray:
    """Dense block k_p(xs[i], ys[j]); meant for small blocks only."""
    params.require_unit_c()
    d = check_same_dim(xs, ys)
    return _langevin_from_diff(xs[:, None, :] - ys[None, :, :], sxs[:, None, :], sys_[None, :, :],
                               params.beta, params.ell, d)


def stein_kernel_diag(sx, params: SteinKernelParams):
    """
    k_p(x, x) = 2 beta d / ell^2 + ||s_p(x)||^2.

    Accepts one score vector (returns a float) or an (n, d) batch (returns an n-vector).
    """
    params.require_unit_c()
    sx = np.asarray(sx, dtype=float)
    d = sx.shape[-1]
    out = 2.0 * params.beta / params.ell ** 2 * d + np.sum(sx * sx, axis=-1)
    return float(out) if sx.ndim == 1 else out


def weighted_gram_sum(xs: np.ndarray, sxs: np.ndarray, wx: np.ndarray,
                      ys: np.ndarray, sys_: np.ndarray, wy: np.ndarray,
                      params: SteinKernelParams, chunk: int = GRAM_CHUNK_ROWS) -> float:
    """
    sum_ij wx[i] wy[j] k_p(xs[i], ys[j]) without materializing the Gram matrix.

    Chunk totals are combined with math.fsum so the result does not depend on
    the chunking.
    """
    params.require_unit_c()
    d = check_same_dim(xs, ys)
    partials = []
    for start in range(0, xs.shape[0], chunk):
        stop = start + chunk
        block = _langevin_from_diff(xs[start:stop, None, :] - ys[None, :, :], sxs[start:stop, None, :],
                                    sys_[None, :, :], params.beta, params.ell, d)
        partials.extend((block @ wy) * wx[start:stop])
    return math.fsum(partials)


def median_heuristic(points, cap: int = MEDIAN_HEURISTIC_CAP, seed: int = MEDIAN_HEURISTIC_SEED) -> float:
    """
    Median of the raw pairwise Euclidean distances, over at most `cap` points.

    Subsampling is uniform without replacement and seeded, so the bandwidth is
    reproducible. A zero median (all points identical, or a chain stuck on
    one state for most of its length) falls back to ell = 1 with a warning.
    """
    arr = np.asarray(getattr(points, "points", points), dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    n = arr.shape[0]
    if n < 2:
        raise KernelParamsError("median heuristic needs at least 2 points")
    if cap < 2:
        raise KernelParamsError("median heuristic cap must be >= 2")

    if n > cap:
        rng = np.random.default_rng(seed)
        arr = arr[rng.choice(n, size=cap, replace=False)]

    ell = float(np.median(pdist(arr, metric="euclidean")))
    if not np.isfinite(ell) or ell <= 0.0:
        logger.warning(f"⚠️ Median heuristic degenerate (median distance = {ell}); falling back to ell = {FALLBACK_BANDWIDTH}")
        return FALLBACK_BANDWIDTH
    logger.debug(f"Median heuristic bandwidth: {ell:.6g} ({arr.shape[0]} points)")
    return ell


# ── Laplacian Stein operator (T_p g = Laplacian(p g) / p) ───────────────────
# Only the IMQ kernel with beta = 1/2 and c = 1 has the closed-form derivative
# stack below. Targets must expose the raw density p, its gradient and the
# diagonal of its Hessian (not log-scale quantities).
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DensityCurvature:
    """Raw density, gradient and Hessian diagonal at one point or a batch."""
    p: np.ndarray
    grad_p: np.ndarray
    hess_diag_p: np.ndarray

    def at(self, i: int) -> "DensityCurvature":
        return DensityCurvature(p=self.p[i], grad_p=self.grad_p[i], hess_diag_p=self.hess_diag_p[i])


def _require_laplacian_params(params: SteinKernelParams):
    params.require_unit_c()
    if params.beta != 0.5:
        raise KernelParamsError(f"the Laplacian-operator kernel is only available for beta = 1/2 (got {params.beta})")


def imq_derivative_stack(delta: np.ndarray, k: np.ndarray, ell: float) -> dict:
    """
    Per-coordinate derivatives of the beta = 1/2 IMQ kernel, delta = x - y.

    `k` must broadcast against `delta` (one value per pair).
    """
    l2, l4, l6, l8 = ell ** 2, ell ** 4, ell ** 6, ell ** 8
    k3, k5, k7, k9 = k ** 3, k ** 5, k ** 7, k ** 9
    dyk = k3 * delta / l2
    d2k = -k3 / l2 + 3.0 * k5 * delta ** 2 / l4
    dx2dyk = -9.0 * k5 * delta / l4 + 15.0 * k7 * delta ** 3 / l6
    return {
        "k": k,
        "dxk": -dyk,
        "dyk": dyk,
        "dx2k": d2k,
        "dy2k": d2k,
        "dxdyk": k3 / l2 - 3.0 * k5 * delta ** 2 / l4,
        "dx2dyk": dx2dyk,
        "dxdy2k": -dx2dyk,
        "dx2dy2k": 9.0 * k5 / l4 - 90.0 * k7 * delta ** 2 / l6 + 105.0 * k9 * delta ** 4 / l8,
    }


def _laplacian_from_parts(delta, px, gx, hx, py, gy, hy, ell: float):
    r2 = np.sum(delta * delta, axis=-1, keepdims=True)
    k = (1.0 + r2 / ell ** 2) ** -0.5
    s = imq_derivative_stack(delta, k, ell)
    num = (
        hx * hy * s["k"]
        + 2.0 * hx * gy * s["dyk"]
        + py * hx * s["dy2k"]
        + 2.0 * gx * hy * s["dxk"]
        + 4.0 * gx * gy * s["dxdyk"]
        + 2.0 * py * gx * s["dxdy2k"]
        + px * hy * s["dx2k"]
        + 2.0 * px * gy * s["dx2dyk"]
        + px * py * s["dx2dy2k"]
    )
    return np.sum(num, axis=-1) / (px[..., 0] * py[..., 0])


def laplacian_stein_kernel(x, y, curv_x: DensityCurvature, curv_y: DensityCurvature,
                           params: SteinKernelParams) -> float:
    _require_laplacian_params(params)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    check_same_dim(x, y)
    px, py = float(curv_x.p), float(curv_y.p)
    if px == 0.0 or py == 0.0:
        raise SingularDensityError("Laplacian Stein kernel evaluated where the density vanishes")
    val = _laplacian_from_parts(
        (x - y)[None, :],
        np.array([[px]]), np.asarray(curv_x.grad_p, dtype=float)[None, :], np.asarray(curv_x.hess_diag_p, dtype=float)[None, :],
        np.array([[py]]), np.asarray(curv_y.grad_p, dtype=float)[None, :], np.asarray(curv_y.hess_diag_p, dtype=float)[None, :],
        params.ell,
    )
    return float(val[0])


def laplacian_kernel_row(x, curv_x: DensityCurvature, points: np.ndarray, curv: DensityCurvature,
                         params: SteinKernelParams) -> np.ndarray:
    _require_laplacian_params(params)
    x = np.asarray(x, dtype=float)
    check_same_dim(x, points)
    p = np.asarray(curv.p, dtype=float)
    if float(curv_x.p) == 0.0 or np.any(p == 0.0):
        raise SingularDensityError("Laplacian Stein kernel evaluated where the density vanishes")
    n = points.shape[0]
    return _laplacian_from_parts(
        x[None, :] - points,
        np.full((n, 1), float(curv_x.p)), np.broadcast_to(curv_x.grad_p, points.shape), np.broadcast_to(curv_x.hess_diag_p, points.shape),
        p[:, None], curv.grad_p, curv.hess_diag_p,
        params.ell,
    )


def laplacian_kernel_diag(curv: DensityCurvature, params: SteinKernelParams) -> np.ndarray:
    """k_p(x_i, x_i) of the Laplacian-operator kernel for every point of a batch."""
    _require_laplacian_params(params)
    p = np.asarray(curv.p, dtype=float)
    if np.any(p == 0.0):
        raise SingularDensityError("Laplacian Stein kernel evaluated where the density vanishes")
    grad, hess = np.asarray(curv.grad_p, dtype=float), np.asarray(curv.hess_diag_p, dtype=float)
    return _laplacian_from_parts(np.zeros_like(grad), p[:, None], grad, hess, p[:, None], grad, hess, params.ell)


def resolve_bandwidth(points, ell: Optional[float] = None, cap: int = MEDIAN_HEURISTIC_CAP,
                      seed: int = MEDIAN_HEURISTIC_SEED, scale: float = 1.0) -> float:
    """Fixed bandwidth when given, `scale` times the median heuristic otherwise."""
    if ell is not None:
        if ell <= 0:
            raise KernelParamsError(f"bandwidth must be positive (got {ell})")
        return float(ell)
    if scale <= 0:
        raise KernelParamsError(f"bandwidth scale must be positive (got {scale})")
    return scale * median_heuristic(points, cap=cap, seed=seed)
