# src/core/samplers.py
"""
Exact mixture draws and MALA chains.

Chains keep rejected proposals (the current state is repeated) and no
burn-in is removed: thinning handles both.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from src.core.errors import DimensionMismatchError, SamplerInitError
from src.core.models import ChainConfig, SampleMeta
from src.core.target_models import (
    BananaTMixtureSpec,
    GaussianMixtureSpec,
    TargetModel,
)
from src.core.utils import chain_rng

logger = logging.getLogger(__name__)


@dataclass
class SampleSet:
    points: np.ndarray
    meta: SampleMeta

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2:
            raise DimensionMismatchError(f"sample points must be an (n, d) matrix, got shape {self.points.shape}")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv_text(self, header: bool = False) -> str:
        frame = pd.DataFrame(self.points, columns=[f"x{j + 1}" for j in range(self.dim)])
        return frame.to_csv(index=False, header=header, float_format="%.17g", lineterminator="\n")

    def meta_json(self) -> str:
        return json.dumps(self.meta.model_dump(), indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path: str, header: bool = False, meta_path: Optional[str] = None) -> "SampleSet":
        """
        Reads a d-column sample CSV (one point per row).

        Args:
            path: CSV file
            header: Whether the first row holds column names
            meta_path: Optional sidecar JSON; a minimal "file" provenance is used otherwise
        """
        frame = pd.read_csv(path, header=0 if header else None, float_precision="round_trip")
        try:
            points = frame.to_numpy(dtype=float)
        except ValueError as e:
            raise DimensionMismatchError(f"non-numeric cell in {path}: {e}") from e
        if meta_path:
            with open(meta_path, "r", encoding="utf-8") as f:
                meta = SampleMeta.model_validate(json.load(f))
        else:
            meta = SampleMeta(sampler="file", n=points.shape[0], dim=points.shape[1])
        return cls(points=points, meta=meta)


# ── exact draws ─────────────────────────────────────────────────────────────

def _draw_gaussian_mixture(spec: GaussianMixtureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    means = np.asarray(spec.means, dtype=float)
    sd = np.sqrt(spec.variance_matrix())
    comp = rng.choice(len(spec.weights), size=n, p=np.asarray(spec.weights))
    return means[comp] + sd[comp] * rng.standard_normal((n, spec.dim))


def _draw_banana_mixture(spec: BananaTMixtureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim
    comp = rng.choice(len(spec.weights), size=n, p=np.asarray(spec.weights))
    # multivariate t: Gaussian scaled by sqrt(dof / chi2_dof)
    g = rng.standard_normal((n, d)) * np.sqrt(spec.scale_vector())
    z = g * np.sqrt(spec.dof / rng.chisquare(spec.dof, size=n))[:, None]
    x = z.copy()
    x[:, 1] = z[:, 1] + spec.b * z[:, 0] ** 2 - 100.0 * spec.b
    return x + np.asarray(spec.centers, dtype=float)[comp]


def exact_mixture_sample(spec: Union[GaussianMixtureSpec, BananaTMixtureSpec], n: int, seed: int) -> SampleSet:
    """n iid draws: component by weight, then a Gaussian or sheared-t draw."""
    rng = chain_rng(seed, 0)
    if isinstance(spec, BananaTMixtureSpec):
        points = _draw_banana_mixture(spec, n, rng)
    else:
        points = _draw_gaussian_mixture(spec, n, rng)
    meta = SampleMeta(sampler="exact", seed=seed, n=n, dim=points.shape[1], target=spec.model_dump())
    return SampleSet(points=points, meta=meta)


# ── MALA ────────────────────────────────────────────────────────────────────

def _mala_chain(model: TargetModel, cfg: ChainConfig, chain_index: int = 0):
    d = model.dim
    x = np.zeros(d) if cfg.init is None else np.asarray(cfg.init, dtype=float)
    if x.shape != (d,):
        raise SamplerInitError(f"init must have {d} coordinates, got {x.shape}")
    with np.errstate(all="ignore"):
        lp = model.log_density_unnorm(x)
        s = model.score(x)
    if not np.isfinite(lp) or not np.all(np.isfinite(s)):
        raise SamplerInitError(f"log density or score not finite at init {x.tolist()}")

    rng = chain_rng(cfg.seed, chain_index)
    eps = cfg.step_size
    half = 0.5 * eps ** 2
    out = np.empty((cfg.n_steps, d))
    accepted = 0

    for t in range(cfg.n_steps):
        xi = rng.standard_normal(d)
        u = rng.uniform()
        prop = x + half * s + eps * xi
        with np.errstate(all="ignore"):
            lp_prop = model.log_density_unnorm(prop)
            s_prop = model.score(prop)
        if np.isfinite(lp_prop) and np.all(np.isfinite(s_prop)):
            # log q(x | prop) - log q(prop | x)
            back = x - prop - half * s_prop
            log_ratio = -np.dot(back, back) / (2.0 * eps ** 2) + 0.5 * np.dot(xi, xi)
            if np.log(u) < lp_prop - lp + log_ratio:
                x, lp, s = prop, lp_prop, s_prop
                accepted += 1
        out[t] = x

    return out, accepted / cfg.n_steps


def mala_sample(model: TargetModel, cfg: ChainConfig, chain_index: int = 0) -> SampleSet:
    """
    Metropolis-adjusted Langevin chain of cfg.n_steps states.

    Args:
        model: Target (only log-density differences are used)
        cfg: Steps, step size, init (origin by default), seed
        chain_index: Stream index; chains sharing a seed differ by this index

    Returns:
        SampleSet with the acceptance rate in its metadata
    """
    points, rate = _mala_chain(model, cfg, chain_index)
    logger.debug(f"MALA chain {chain_index}: {cfg.n_steps} steps, eps={cfg.step_size}, acceptance={rate:.3f}")
    meta = SampleMeta(sampler="mala", seed=cfg.seed, n=cfg.n_steps, dim=model.dim,
                      step_size=cfg.step_size, acceptance_rate=rate)
    return SampleSet(points=points, meta=meta)


def mala_sample_chains(model: TargetModel, cfg: ChainConfig, n_chains: int, max_workers: int = 1) -> SampleSet:
    """
    Independent chains (stream = (seed, chain index)) concatenated in chain order.

    The acceptance rate in the metadata is the mean over chains.
    """
    results: List = [None] * n_chains
    if max_workers <= 1 or n_chains == 1:
        for c in range(n_chains):
            results[c] = _mala_chain(model, cfg, c)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(_mala_chain, model, cfg, c): c for c in range(n_chains)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    points = np.concatenate([r[0] for r in results], axis=0)
    rate = float(np.mean([r[1] for r in results]))
    meta = SampleMeta(sampler="mala", seed=cfg.seed, n=points.shape[0], dim=model.dim,
                      step_size=cfg.step_size, acceptance_rate=rate, n_chains=n_chains)
    return SampleSet(points=points, meta=meta)
