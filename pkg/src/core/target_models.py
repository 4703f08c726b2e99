# src/core/target_models.py
"""
Target densities known up to a constant.

Every model evaluates on a single point (shape (d,)) or a batch (shape (n, d)),
and returns matching shapes: log density -> float | (n,), score and Hessian
diagonal -> (d,) | (n, d).
"""
import math
import logging
from abc import ABC, abstractmethod
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from scipy.special import expit, gammaln, logsumexp

from src.core.config import HESS_FD_STEP
from src.core.errors import DatasetError, DimensionMismatchError
from src.core.stein_kernels import DensityCurvature
from src.core.utils import as_batch, central_diag_derivative

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


def _check_weights(weights: List[float]):
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("mixture weights must be nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise ValueError(f"mixture weights must sum to 1 (got {w.sum():.15g})")


class TargetModel(ABC):
    """Unnormalized log density, score and diagonal of the log-density Hessian."""

    dim: int

    @abstractmethod
    def _log_density(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _score(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _hess_diag_log(self, x: np.ndarray) -> np.ndarray:
        ...

    def log_density_unnorm(self, x):
        batch, single = as_batch(x, self.dim)
        out = self._log_density(batch)
        return float(out[0]) if single else out

    def score(self, x):
        batch, single = as_batch(x, self.dim)
        out = self._score(batch)
        return out[0] if single else out

    def hess_diag_log(self, x):
        batch, single = as_batch(x, self.dim)
        out = self._hess_diag_log(batch)
        return out[0] if single else out

    def lap_plus(self, x):
        """Truncated Laplacian of log p: sum_j max(d^2 log p / dx_j^2, 0)."""
        return np.sum(np.clip(self.hess_diag_log(x), 0.0, None), axis=-1)


# ── Gaussian mixtures ───────────────────────────────────────────────────────

class GaussianMixtureSpec(BaseModel):
    """
    K components with isotropic (one variance per component) or diagonal
    (one variance per coordinate) covariances.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    means: List[List[float]]
    variances: List[Union[float, List[float]]]
    weights: List[float]

    @model_validator(mode="after")
    def _validate(self):
        k = len(self.means)
        if k == 0:
            raise ValueError("a mixture needs at least one component")
        d = len(self.means[0])
        if d == 0 or any(len(m) != d for m in self.means):
            raise ValueError("all means must share the same positive dimension")
        if len(self.variances) != k or len(self.weights) != k:
            raise ValueError("means, variances and weights must have the same number of components")
        for v in self.variances:
            vals = [v] if isinstance(v, (int, float)) else v
            if not isinstance(v, (int, float)) and len(v) != d:
                raise ValueError("diagonal variances must have one entry per coordinate")
            if any(val <= 0 for val in vals):
                raise ValueError("variances must be positive")
        _check_weights(self.weights)
        return self

    @property
    def dim(self) -> int:
        return len(self.means[0])

    def variance_matrix(self) -> np.ndarray:
        d = self.dim
        return np.array([[float(v)] * d if isinstance(v, (int, float)) else list(v) for v in self.variances])


class GaussianMixture(TargetModel):

    def __init__(self, spec: GaussianMixtureSpec):
        self.spec = spec
        self.means = np.asarray(spec.means, dtype=float)
        self.variances = spec.variance_matrix()
        self.weights = np.asarray(spec.weights, dtype=float)
        self.dim = spec.dim
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(self.weights)
        self._log_norm = -0.5 * np.sum(np.log(2.0 * np.pi * self.variances), axis=1)

    def _components(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        diff = x[:, None, :] - self.means[None, :, :]
        comp_log = self.log_weights + self._log_norm - 0.5 * np.sum(diff ** 2 / self.variances, axis=-1)
        return comp_log, -diff / self.variances

    def _responsibilities(self, x: np.ndarray):
        comp_log, grads = self._components(x)
        lse = logsumexp(comp_log, axis=1)
        return np.exp(comp_log - lse[:, None]), grads, lse

    def _log_density(self, x):
        comp_log, _ = self._components(x)
        return logsumexp(comp_log, axis=1)

    def _score(self, x):
        resp, grads, _ = self._responsibilities(x)
        return np.einsum("nk,nkd->nd", resp, grads)

    def _hess_diag_log(self, x):
        resp, grads, _ = self._responsibilities(x)
        s = np.einsum("nk,nkd->nd", resp, grads)
        second = np.einsum("nk,nkd->nd", resp, grads ** 2 - 1.0 / self.variances)
        return second - s ** 2

    def responsibilities(self, x) -> np.ndarray:
        batch, _ = as_batch(x, self.dim)
        return self._responsibilities(batch)[0]

    def density_curvature(self, x) -> DensityCurvature:
        """Normalized density, its gradient and Hessian diagonal (raw scale)."""
        batch, _ = as_batch(x, self.dim)
        resp, grads, lse = self._responsibilities(batch)
        s = np.einsum("nk,nkd->nd", resp, grads)
        h = np.einsum("nk,nkd->nd", resp, grads ** 2 - 1.0 / self.variances) - s ** 2
        p = np.exp(lse)
        return DensityCurvature(p=p, grad_p=p[:, None] * s, hess_diag_p=p[:, None] * (h + s ** 2))


def symmetric_mixture_score(z, mu: float, sigma: float):
    """First score coordinate of the equal-weight mixture at (z, 0_{d-1})."""
    s2 = sigma ** 2
    return -np.asarray(z) / s2 + (mu / s2) * np.tanh(mu * np.asarray(z) / s2)


def symmetric_mixture_parameters(spec: GaussianMixtureSpec) -> Tuple[float, float]:
    """(mu, sigma) of a two-component mixture centered in (-mu, 0) and (mu, 0) with shared isotropic variance."""
    means = np.asarray(spec.means, dtype=float)
    var = spec.variance_matrix()
    if means.shape[0] != 2:
        raise ValueError("expected a two-component mixture")
    if not np.allclose(means[0], -means[1]) or not np.allclose(means[:, 1:], 0.0) or means[1, 0] <= 0:
        raise ValueError("components must be centered in (-mu, 0_{d-1}) and (mu, 0_{d-1})")
    if not np.allclose(var, var[0, 0]):
        raise ValueError("components must share one isotropic variance")
    return float(means[1, 0]), float(math.sqrt(var[0, 0]))


# ── catalogue ───────────────────────────────────────────────────────────────

def example_mixture_spec(mu: float = 3.0, sigma: float = 1.0, w: float = 0.5, dim: int = 2) -> GaussianMixtureSpec:
    """Two modes at (-mu, 0_{d-1}) (weight w) and (mu, 0_{d-1}) (weight 1 - w)."""
    left = [-mu] + [0.0] * (dim - 1)
    right = [mu] + [0.0] * (dim - 1)
    return GaussianMixtureSpec(means=[left, right], variances=[sigma ** 2, sigma ** 2], weights=[w, 1.0 - w])


def weighted_four_mode_spec(reading: Literal["corrected", "literal"] = "corrected") -> GaussianMixtureSpec:
    # The second center is printed as a duplicate of the first; "corrected" reads it as (-3, -3).
    second = [-3.0, -3.0] if reading == "corrected" else [-3.0, 3.0]
    return GaussianMixtureSpec(
        means=[[-3.0, 3.0], second, [3.0, 3.0], [3.0, -3.0]],
        variances=[1.0, 1.0, 1.0, 1.0],
        weights=[0.1, 0.1, 0.4, 0.4],
    )


def ring_spec(n_modes: int = 6, radius: float = 3.0) -> GaussianMixtureSpec:
    angles = 2.0 * np.pi * np.arange(n_modes) / n_modes
    means = [[radius * math.cos(a), radius * math.sin(a)] for a in angles]
    return GaussianMixtureSpec(means=means, variances=[1.0] * n_modes, weights=[1.0 / n_modes] * n_modes)


def four_mode_spec(dim: int = 2) -> GaussianMixtureSpec:
    pad = [0.0] * (dim - 2)
    means = [[-2.0, 0.0] + pad, [2.0, 0.0] + pad, [-3.0, 4.0] + pad, [3.0, 4.0] + pad]
    return GaussianMixtureSpec(means=means, variances=[1.0, 1.0, 2.0, 2.0], weights=[0.25] * 4)


# ── t-banana mixtures ───────────────────────────────────────────────────────

class BananaTMixtureSpec(BaseModel):
    """
    Mixture of sheared multivariate-t modes: X = phi(Z) + center with
    phi_2(z) = z_2 + b z_1^2 - 100 b, the other coordinates unchanged.
    `scale` is the diagonal of the t scale matrix (ones by default).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = Field(ge=2)
    b: float = 0.1
    dof: float = Field(default=7.0, gt=2)
    centers: List[List[float]]
    weights: List[float]
    scale: Optional[List[float]] = None

    @model_validator(mode="after")
    def _validate(self):
        if len(self.centers) == 0 or len(self.centers) != len(self.weights):
            raise ValueError("centers and weights must have the same positive length")
        if any(len(c) != self.dim for c in self.centers):
            raise ValueError("every center must have `dim` coordinates")
        if self.scale is not None and (len(self.scale) != self.dim or any(s <= 0 for s in self.scale)):
            raise ValueError("scale must hold `dim` positive entries")
        _check_weights(self.weights)
        return self

    def scale_vector(self) -> np.ndarray:
        return np.ones(self.dim) if self.scale is None else np.asarray(self.scale, dtype=float)


def banana_mixture_spec(dim: int = 2, b: float = 0.1, dof: float = 7.0,
                        scale: Optional[List[float]] = None) -> BananaTMixtureSpec:
    second = [0.0, 8.0] + [0.0] * (dim - 2)
    return BananaTMixtureSpec(dim=dim, b=b, dof=dof, centers=[[0.0] * dim, second], weights=[0.25, 0.75], scale=scale)


class BananaTMixture(TargetModel):

    def __init__(self, spec: BananaTMixtureSpec):
        self.spec = spec
        self.dim = spec.dim
        self.b = spec.b
        self.dof = spec.dof
        self.centers = np.asarray(spec.centers, dtype=float)
        self.scale = spec.scale_vector()
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(np.asarray(spec.weights, dtype=float))
        nu, d = self.dof, self.dim
        self._log_norm = (gammaln((nu + d) / 2.0) - gammaln(nu / 2.0)
                          - 0.5 * d * math.log(nu * math.pi) - 0.5 * float(np.sum(np.log(self.scale))))

    def pullback(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(u, z) per component: u = x - center, z = phi^{-1}(u)."""
        u = x[:, None, :] - self.centers[None, :, :]
        z = u.copy()
        z[..., 1] = u[..., 1] - self.b * u[..., 0] ** 2 + 100.0 * self.b
        return u, z

    def _components(self, x):
        u, z = self.pullback(x)
        q = np.sum(z ** 2 / self.scale, axis=-1)
        comp_log = self.log_weights + self._log_norm - 0.5 * (self.dof + self.dim) * np.log1p(q / self.dof)
        gz = -((self.dof + self.dim) / (self.dof + q))[..., None] * z / self.scale
        gx = gz.copy()
        gx[..., 0] += gz[..., 1] * (-2.0 * self.b * u[..., 0])
        return comp_log, gx

    def _log_density(self, x):
        comp_log, _ = self._components(x)
        return logsumexp(comp_log, axis=1)

    def _score(self, x):
        comp_log, gx = self._components(x)
        resp = np.exp(comp_log - logsumexp(comp_log, axis=1)[:, None])
        return np.einsum("nk,nkd->nd", resp, gx)

    def _hess_diag_log(self, x):
        return central_diag_derivative(self._score, x, HESS_FD_STEP)


# ── Bayesian logistic regression ────────────────────────────────────────────

class LogisticPosterior(TargetModel):
    """
    Posterior over theta = (beta_0, beta) with Bernoulli-logit likelihood and
    independent Student-t(2a, 0, b/a) priors (b/a is the squared scale).
    The intercept gets the same prior unless `intercept_prior="flat"`.
    """

    CHUNK = 2048

    def __init__(self, features: np.ndarray, labels: np.ndarray, a: float = 1.0, b: float = 1.0,
                 intercept_prior: Literal["student_t", "flat"] = "student_t"):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.ndim != 2 or features.shape[0] == 0:
            raise DatasetError("logistic posterior needs a nonempty (N, d) feature matrix")
        if labels.shape != (features.shape[0],):
            raise DimensionMismatchError("labels must have one entry per row of features")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise DatasetError("labels must be in {0, 1}")
        self.design = np.hstack([np.ones((features.shape[0], 1)), features])
        self.labels = labels
        self.dim = self.design.shape[1]
        self.df = 2.0 * a
        self.scale2 = b / a
        self.prior_mask = np.ones(self.dim, dtype=bool)
        if intercept_prior == "flat":
            self.prior_mask[0] = False

    def _chunked(self, fn, x: np.ndarray) -> np.ndarray:
        return np.concatenate([fn(x[i:i + self.CHUNK]) for i in range(0, x.shape[0], self.CHUNK)], axis=0)

    def _log_density(self, x):
        def block(theta):
            eta = theta @ self.design.T
            loglik = np.sum(self.labels * eta - np.logaddexp(0.0, eta), axis=1)
            prior = stats.t.logpdf(theta[:, self.prior_mask], df=self.df, scale=math.sqrt(self.scale2))
            return loglik + np.sum(prior, axis=1)
        return self._chunked(block, x)

    def _score(self, x):
        nu, s2 = self.df, self.scale2

        def block(theta):
            eta = theta @ self.design.T
            grad = (self.labels - expit(eta)) @ self.design
            prior = -(nu + 1.0) * theta / (nu * s2 + theta ** 2)
            return grad + prior * self.prior_mask
        return self._chunked(block, x)

    def _hess_diag_log(self, x):
        nu, s2 = self.df, self.scale2

        def block(theta):
            sig = expit(theta @ self.design.T)
            curv = -(sig * (1.0 - sig)) @ (self.design ** 2)
            prior = -(nu + 1.0) * (nu * s2 - theta ** 2) / (nu * s2 + theta ** 2) ** 2
            return curv + prior * self.prior_mask
        return self._chunked(block, x)
