# src/core/utils.py
import os
import json
import hashlib
from typing import Callable, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.core.config import ALL_RUNS_DIR
from src.core.errors import DimensionMismatchError


def get_run_path(run_name: str, out_dir: Optional[str] = None) -> str:
    """
    Constructs the standardized path for a run directory.

    Args:
        run_name: The experiment / run identifier
        out_dir: Root directory overriding the configured default

    Returns:
        Full path to the run directory
    """
    return os.path.join(out_dir or ALL_RUNS_DIR, run_name)


def config_digest(config: dict) -> str:
    """Short, order-independent digest of a resolved config (16 hex chars)."""
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def as_batch(x, dim: Optional[int] = None) -> Tuple[np.ndarray, bool]:
    """
    Returns `x` as an (n, d) float array and whether the input was a single point.

    A 1-d input of length d is treated as one point.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected a point or a batch of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {arr.shape[1]}")
    return arr, single


def check_same_dim(x: np.ndarray, y: np.ndarray) -> int:
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatchError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return x.shape[-1]


def fd_step(x: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(x))


def central_diag_derivative(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray, rel: float) -> np.ndarray:
    """
    Diagonal of the Jacobian of a vector field by central differences.

    `fn` maps an (n, d) batch to an (n, d) batch; entry (i, j) of the result is
    d fn_j / d x_j at points[i].
    """
    n, d = points.shape
    out = np.empty((n, d))
    for j in range(d):
        h = fd_step(points[:, j], rel)
        plus = points.copy()
        minus = points.copy()
        plus[:, j] += h
        minus[:, j] -= h
        out[:, j] = (fn(plus)[:, j] - fn(minus)[:, j]) / (2.0 * h)
    return out


def repeat_seed(base_seed: int, repeat: int) -> int:
    """Seed of the `repeat`-th replicate; replicate 0 keeps the base seed."""
    return int(base_seed) + int(repeat)


def chain_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    """One independent stream per (seed, chain index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chain_index),)))


def progress_bar(total: int, desc: str, unit: str, enabled: bool, file=None) -> tqdm:
    """tqdm bar; when enabled it still stays silent unless the stream is a TTY."""
    return tqdm(total=total, desc=desc, unit=unit, disable=None if enabled else True, file=file)
