# src/core/bayes_logistic.py
"""
Bayesian logistic regression pipeline: CSV ingestion, stratified repeated
cross-validation, MALA on the posterior, thinning, posterior-predictive AUC.
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import mannwhitneyu
from sklearn.model_selection import StratifiedKFold

from src import __version__
from src.core.errors import DatasetError, DimensionMismatchError, EmptySelectionError
from src.core.models import (
    ChainConfig,
    LogisticConfig,
    MethodConfig,
    MetricRecord,
    MetricReport,
    ThinningConfig,
)
from src.core.samplers import mala_sample_chains
from src.core.stein_kernels import SteinKernelParams, resolve_bandwidth
from src.core.target_models import LogisticPosterior
from src.core.thinning import CandidatePool, lambda_for_rule, regularized_stein_thin, stein_thin
from src.core.utils import as_batch, progress_bar

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(features=self.features[idx], labels=self.labels[idx], name=self.name)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        std = features.std(axis=0)
        # constant columns are centered only
        return cls(mean=features.mean(axis=0), std=np.where(std > 0, std, 1.0))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std


def _binary_labels(column: pd.Series) -> np.ndarray:
    values = sorted(column.unique().tolist())
    if len(values) > 2:
        raise DatasetError(f"labels must be binary, found {len(values)} distinct values")
    if set(values) <= {0, 1}:
        return column.to_numpy(dtype=float)
    # two arbitrary values: the larger one (sorted order) becomes class 1
    return (column == values[-1]).to_numpy(dtype=float)


def load_csv_dataset(path: str, label_column: str, standardize: bool = False,
                     name: Optional[str] = None) -> Dataset:
    """
    Loads a numeric CSV with one label column.

    Args:
        path: CSV with a header row
        label_column: Name of the binary label column
        standardize: Standardize every feature column over the whole file
            (cross-validation standardizes with training-fold statistics instead)
        name: Dataset name (file stem by default)

    Returns:
        Dataset with labels in {0, 1}
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.ParserError as e:
        raise DatasetError(f"cannot parse {path}: {e}") from e
    if label_column not in frame.columns:
        raise DatasetError(f"label column '{label_column}' not found in {path}")

    labels = _binary_labels(frame[label_column])
    feature_frame = frame.drop(columns=[label_column])
    try:
        features = feature_frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as e:
        raise DatasetError(f"non-numeric feature cell in {path}: {e}") from e
    if np.isnan(features).any() or np.isnan(labels).any():
        raise DatasetError(f"missing values in {path}")
    if features.shape[0] == 0:
        raise DatasetError(f"{path} has no rows")

    if standardize:
        features = Standardizer.fit(features).transform(features)
    stem = name or path.replace("\\", "/").rsplit("/", 1)[-1].rsplit(".", 1)[0]
    logger.info(f"✅ Dataset {stem}: N={features.shape[0]}, d={features.shape[1]}")
    return Dataset(features=features, labels=labels, name=stem)


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = 10
    n_repeats: int = 10
    seed: int = 0

    def folds(self, labels: np.ndarray) -> Iterator[Tuple[int, int, np.ndarray, np.ndarray]]:
        """(repeat, fold, train indices, test indices), stratified by label."""
        for r in range(self.n_repeats):
            skf = StratifiedKFold(n_splits=self.n_folds, shuffle=True, random_state=self.seed + r)
            for f, (train, test) in enumerate(skf.split(np.zeros(labels.shape[0]), labels)):
                yield r, f, train, test


def posterior_predictive(thetas, x_star) -> np.ndarray:
    """Mean over theta of sigmoid(beta_0 + beta . x*), for one input or a batch."""
    theta = np.asarray(getattr(thetas, "points", thetas), dtype=float)
    if theta.ndim == 1:
        theta = theta[None, :]
    if theta.shape[0] == 0:
        raise EmptySelectionError("posterior_predictive needs at least one theta")
    x, single = as_batch(x_star)
    if x.shape[1] + 1 != theta.shape[1]:
        raise DimensionMismatchError(f"theta has {theta.shape[1]} coordinates, inputs have {x.shape[1]} features")
    eta = theta[:, :1].T + x @ theta[:, 1:].T
    probs = expit(eta).mean(axis=1)
    return float(probs[0]) if single else probs


def auc(scores, labels) -> float:
    """Mann-Whitney AUC, ties counted 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise DatasetError("AUC needs both classes")
    u = mannwhitneyu(pos, neg, alternative="two-sided").statistic
    return float(u / (pos.size * neg.size))


def _method_lambda(method: MethodConfig, m: int) -> float:
    return lambda_for_rule(method.lambda_rule, m, method.lam)


def _fold_aucs(dataset: Dataset, train: np.ndarray, test: np.ndarray, cfg: LogisticConfig,
               thinning: ThinningConfig, methods: Sequence[MethodConfig], seed: int) -> List[Tuple[str, int, float, float]]:
    """One CV fold: (method name, m, eps, auc) for every combination."""
    x_train, x_test = dataset.features[train], dataset.features[test]
    if cfg.standardize:
        scaler = Standardizer.fit(x_train)
        x_train, x_test = scaler.transform(x_train), scaler.transform(x_test)
    model = LogisticPosterior(x_train, dataset.labels[train], a=cfg.a, b=cfg.b, intercept_prior=cfg.intercept_prior)
    y_test = dataset.labels[test]

    out = []
    for eps in cfg.step_sizes:
        chain = mala_sample_chains(model, ChainConfig(n_steps=cfg.n_steps, step_size=eps, seed=seed), cfg.n_chains)
        fixed = thinning.ell if thinning.ell_mode == "fixed" else None
        ell = resolve_bandwidth(chain.points, fixed, scale=thinning.ell_scale)
        pool = CandidatePool.from_model(model, chain.points, kernel=SteinKernelParams(ell=ell, beta=thinning.beta))
        for m in cfg.ms:
            for method in methods:
                if method.method == "st":
                    result = stein_thin(pool, m)
                elif method.method == "rst":
                    result = regularized_stein_thin(pool, m, _method_lambda(method, m))
                else:
                    raise DatasetError(f"method '{method.method}' is not available for logistic posteriors")
                probs = posterior_predictive(result.selected(pool), x_test)
                out.append((method.name, m, eps, auc(probs, y_test)))
    return out


def run_logistic_experiment(dataset: Dataset, cv: CvPlan, cfg: LogisticConfig, thinning: ThinningConfig,
                            methods: Sequence[MethodConfig], max_workers: int = 1,
                            progress: bool = True, config: Optional[dict] = None) -> MetricReport:
    """
    Per fold: MALA on the training posterior (one chain set per step size),
    thinning by every method, posterior-predictive scores on the test fold, AUC.

    The summary reports, per method and m, the mean (sd) AUC of the best step
    size: `{method}_m{m}_auc_mean`, `{method}_m{m}_auc_sd`, `{method}_m{m}_best_eps`.
    """
    plan = list(cv.folds(dataset.labels))
    logger.info(f"🔄 Logistic CV on {dataset.name}: {len(plan)} folds x {len(cfg.step_sizes)} step sizes x {len(methods)} methods")

    def task(item):
        r, f, train, test = item
        seed = cv.seed + 1000 * r + f
        return r, f, seed, _fold_aucs(dataset, train, test, cfg, thinning, methods, seed)

    results = [None] * len(plan)
    bar = progress_bar(len(plan), "CV folds", "fold", progress)
    if max_workers <= 1:
        for i, item in enumerate(plan):
            results[i] = task(item)
            bar.update(1)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(task, item): i for i, item in enumerate(plan)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                bar.update(1)
    bar.close()

    records: List[MetricRecord] = []
    table: Dict[Tuple[str, int, float], List[float]] = {}
    for r, f, seed, rows in results:
        for name, m, eps, value in rows:
            records.append(MetricRecord(method=name, d=dataset.dim + 1, m=m, eps=eps, seed=seed, metric="auc", value=value))
            table.setdefault((name, m, eps), []).append(value)

    summary: Dict[str, float] = {}
    for method in methods:
        for m in cfg.ms:
            means = {eps: float(np.mean(table[(method.name, m, eps)])) for eps in cfg.step_sizes}
            best = max(cfg.step_sizes, key=lambda e: means[e])
            vals = table[(method.name, m, best)]
            summary[f"{method.name}_m{m}_auc_mean"] = means[best]
            summary[f"{method.name}_m{m}_auc_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            summary[f"{method.name}_m{m}_best_eps"] = float(best)

    notes = []
    pool_size = cfg.n_chains * cfg.n_steps
    for m in cfg.ms:
        if m > pool_size:
            notes.append(f"m={m} exceeds the {pool_size}-point chain pool; selected particles repeat")
    logger.info("✅ Logistic CV done: " + ", ".join(f"{k}={v:.3f}" for k, v in summary.items() if k.endswith("auc_mean")))
    return MetricReport(name=dataset.name, kind="logistic", version=__version__, config=config or {},
                        summary=summary, notes=notes, records=records)
