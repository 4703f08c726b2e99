# src/core/experiments.py
"""
Runners behind `experiment` / `logistic`: one function per experiment kind,
each returning a MetricReport whose records are long-format CSV rows.
"""
import os
import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src import __version__
from src.core.bayes_logistic import CvPlan, load_csv_dataset, run_logistic_experiment
from src.core.config import PRESETS_DIR
from src.core.diagnostics import (
    band_count,
    concentration_check,
    energy_mmd,
    estimate_eta,
    lambda_search,
    mode_proportions,
    pathology_bounds,
    saddle_band_halfwidth,
    truncated_mixture_clusters,
    weight_sweep,
)
from src.core.errors import ConfigError
from src.core.models import (
    ChainConfig,
    ExperimentConfig,
    ExperimentSuite,
    MethodConfig,
    MetricRecord,
    MetricReport,
    build_target,
)
from src.core.samplers import SampleSet, exact_mixture_sample, mala_sample_chains
from src.core.stein_kernels import SteinKernelParams, resolve_bandwidth
from src.core.target_models import BananaTMixtureSpec, GaussianMixture, symmetric_mixture_parameters
from src.core.thinning import (
    CandidatePool,
    ThinningResult,
    ksd_squared,
    lambda_for_rule,
    laplacian_stein_thin,
    regularized_stein_thin,
    stein_thin,
)
from src.core.utils import progress_bar, repeat_seed

logger = logging.getLogger(__name__)

MMD_REFERENCE_SEED_OFFSET = 1_000_003


# ========================================
# Loading
# ========================================

def resolve_preset_path(name: str, presets_dir: Optional[str] = None) -> str:
    path = os.path.join(presets_dir or PRESETS_DIR, f"{name}.json")
    if not os.path.exists(path):
        raise ConfigError(f"unknown preset '{name}' (looked for {path})")
    return path


def parse_experiments(document: dict) -> Tuple[str, List[ExperimentConfig]]:
    """A single config or a suite {"name", "runs"}; returns (suite name, configs)."""
    try:
        if "runs" in document:
            suite = ExperimentSuite.model_validate(document)
            return suite.name, suite.runs
        config = ExperimentConfig.model_validate(document)
        return config.name, [config]
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def load_experiments(path: str) -> Tuple[str, List[ExperimentConfig]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return parse_experiments(document)


def with_seed(config: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    if seed is None:
        return config
    return config.model_copy(update={"sampler": config.sampler.model_copy(update={"seed": seed})})


# ========================================
# Shared pieces
# ========================================

def draw_sample(config: ExperimentConfig, seed: int, step_size: Optional[float] = None,
                target=None) -> SampleSet:
    target = target or config.target
    sampler = config.sampler
    if sampler.type == "exact":
        return exact_mixture_sample(target.spec(), sampler.n, seed)
    model = build_target(target)
    cfg = ChainConfig(n_steps=sampler.n, step_size=step_size or sampler.step_size, init=sampler.init, seed=seed)
    return mala_sample_chains(model, cfg, sampler.n_chains)


def thin(pool: CandidatePool, method: MethodConfig, m: int, model=None) -> ThinningResult:
    if method.method == "st":
        return stein_thin(pool, m)
    if method.method == "rst":
        return regularized_stein_thin(pool, m, lambda_for_rule(method.lambda_rule, m, method.lam))
    if not isinstance(model, GaussianMixture):
        raise ConfigError("the laplacian method needs a Gaussian mixture target")
    return laplacian_stein_thin(model, pool.points, m, kernel=SteinKernelParams(ell=pool.kernel.ell, beta=0.5))


def kernel_for(config: ExperimentConfig, points: np.ndarray) -> SteinKernelParams:
    t = config.thinning
    ell = resolve_bandwidth(points, t.ell if t.ell_mode == "fixed" else None, scale=t.ell_scale)
    return SteinKernelParams(ell=ell, beta=t.beta)


def mode_setup(config: ExperimentConfig, target) -> Tuple[np.ndarray, List[str]]:
    ev = config.evaluation
    spec = target.spec()
    centers = np.asarray(ev.mode_centers if ev.mode_centers is not None else
                         (spec.centers if isinstance(spec, BananaTMixtureSpec) else spec.means), dtype=float)
    if ev.mode_labels is not None:
        if len(ev.mode_labels) != centers.shape[0]:
            raise ConfigError("mode_labels must name every mode center")
        return centers, list(ev.mode_labels)
    if target.kind == "example_mixture":
        return centers, ["left", "right"]
    return centers, [f"mode{k + 1}" for k in range(centers.shape[0])]


def band_halfwidth(config: ExperimentConfig, target) -> Optional[float]:
    hw = config.evaluation.band_halfwidth
    if hw != "z_max":
        return hw
    mu, sigma = symmetric_mixture_parameters(target.spec())
    z = saddle_band_halfwidth(mu, sigma)
    if z is None:
        raise ConfigError("band_halfwidth 'z_max' is undefined when mu <= sigma")
    return z


def fan_out(fn: Callable[[int], object], n: int, max_workers: int, progress: bool, desc: str) -> List:
    """Runs fn(0..n-1) and returns the results in index order."""
    results = [None] * n
    bar = progress_bar(n, desc, "run", progress)
    if max_workers <= 1:
        for i in range(n):
            results[i] = fn(i)
            bar.update(1)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(fn, i): i for i in range(n)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                bar.update(1)
    bar.close()
    return results


def _suffix(parts: Dict[str, object], swept: Dict[str, bool]) -> str:
    return "".join(f"_{k}{v}" for k, v in parts.items() if swept[k])


# ========================================
# kind = thinning / laplacian_operator
# ========================================

def run_thinning(config: ExperimentConfig, max_workers: int = 1, progress: bool = True) -> MetricReport:
    """
    Repeats x (dims, step sizes, ms) x methods. Per thinned sample: mode
    proportions, band count, final KSD^2 and, when enabled, energy MMD to an
    exact reference sample.
    """
    ev = config.evaluation
    dims = config.sweep.dims or [None]
    epss = config.sweep.step_sizes or [config.sampler.step_size]
    ms = config.sweep.ms or [config.thinning.m]
    swept = {"d": bool(config.sweep.dims), "eps": bool(config.sweep.step_sizes), "m": bool(config.sweep.ms)}
    mala = config.sampler.type == "mala"

    grid = [(d, eps) for d in dims for eps in epss]
    jobs = [(d, eps, r) for d, eps in grid for r in range(ev.repeats)]
    logger.info(f"🔄 {config.name}: {len(jobs)} samples x {len(ms)} sizes x {len(config.methods)} methods")

    def job(i: int) -> List[MetricRecord]:
        d, eps, r = jobs[i]
        target = config.target if d is None else config.target.model_copy(update={"dim": d})
        model = build_target(target)
        seed = repeat_seed(config.sampler.seed, r)
        sample = draw_sample(config, seed, eps, target)
        pool = CandidatePool.from_model(model, sample.points, kernel=kernel_for(config, sample.points))
        centers, labels = mode_setup(config, target)
        hw = band_halfwidth(config, target)
        reference = None
        if ev.mmd:
            reference = exact_mixture_sample(target.spec(), ev.mmd_reference_size, seed + MMD_REFERENCE_SEED_OFFSET)

        rows = []
        dim = model.dim
        eps_val = eps if mala else None
        for m in ms:
            for method in config.methods:
                result = thin(pool, method, m, model)
                selected = result.selected(pool)

                def emit(metric: str, value: float):
                    rows.append(MetricRecord(method=method.name, d=dim, m=m, eps=eps_val, seed=seed, metric=metric, value=float(value)))

                for label, share in zip(labels, mode_proportions(selected, centers)):
                    emit(f"{label}_mode", share)
                if hw is not None:
                    emit("band_count", band_count(selected, hw, ev.band_axis))
                emit("ksd2", ksd_squared(pool, result.indices))
                if reference is not None:
                    emit("mmd", energy_mmd(selected, reference, unbiased=ev.mmd_unbiased))
        return rows

    records = [row for rows in fan_out(job, len(jobs), max_workers, progress, config.name) for row in rows]
    summary = summarize_thinning(records, config, swept)
    return MetricReport(name=config.name, kind=config.kind, version=__version__,
                        config=config.model_dump(mode="json"), summary=summary, records=records)


def summarize_thinning(records: Sequence[MetricRecord], config: ExperimentConfig,
                       swept: Dict[str, bool]) -> Dict[str, float]:
    """
    Keys: `{method}_{metric}_mean` / `_sd` (`_median` too for mmd), plus
    `{method}_band_hit_seeds` (repeats with at least one particle in the band).
    Swept axes are appended as `_d{d}`, `_eps{eps}`, `_m{m}`.
    """
    groups: Dict[Tuple, List[float]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.metric, rec.d, rec.eps, rec.m), []).append(rec.value)

    summary: Dict[str, float] = {}
    for (method, metric, d, eps, m), values in groups.items():
        base = f"{method}_{metric}" + _suffix({"d": d, "eps": eps, "m": m}, swept)
        arr = np.asarray(values)
        summary[f"{base}_mean"] = float(arr.mean())
        summary[f"{base}_sd"] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        if metric == "mmd":
            summary[f"{base}_median"] = float(np.median(arr))
        if metric == "band_count":
            hit = f"{method}_band_hit_seeds" + _suffix({"d": d, "eps": eps, "m": m}, swept)
            summary[hit] = float(np.sum(arr > 0))
    return summary


# ========================================
# kind = weight_sweep
# ========================================

def weight_grid(config: ExperimentConfig) -> np.ndarray:
    ws = config.weight_sweep
    count = int(round((ws.grid_stop - ws.grid_start) / ws.grid_step)) + 1
    return np.round(ws.grid_start + ws.grid_step * np.arange(count), 10)


def run_weight_sweep(config: ExperimentConfig, max_workers: int = 1, progress: bool = True) -> MetricReport:
    """
    Truncated two-mode clusters per repeat, KSD^2_lambda over the weight grid,
    eta estimate, and optionally a lambda search towards the target weight.
    """
    ws = config.weight_sweep
    if ws is None:
        raise ConfigError("kind 'weight_sweep' requires a weight_sweep section")
    spec = config.target.spec()
    model = GaussianMixture(spec)
    w_p = float(spec.weights[0])
    grid = weight_grid(config)

    def job(r: int):
        seed = repeat_seed(config.sampler.seed, r)
        left, right = truncated_mixture_clusters(spec, config.sampler.n, ws.radius_sd, seed)
        kernel = kernel_for(config, np.vstack([left, right]))
        res = weight_sweep(left, right, model, grid, ws.lam, kernel)
        search = lambda_search(left, right, model, grid, w_p, np.logspace(np.log10(ws.lambda_min), np.log10(ws.lambda_max), ws.lambda_num), kernel) if ws.lambda_search else None
        return seed, res, search

    outcomes = fan_out(job, config.evaluation.repeats, max_workers, progress, config.name)

    records: List[MetricRecord] = []
    d = spec.dim
    for seed, res, search in outcomes:
        for w, v in zip(res.weights, res.ksd_values):
            records.append(MetricRecord(method="sweep", d=d, seed=seed, metric=f"ksd2_w{w:.2f}", value=float(v)))
        records.append(MetricRecord(method="sweep", d=d, seed=seed, metric="argmin_w", value=res.argmin_w))
        records.append(MetricRecord(method="sweep", d=d, seed=seed, metric="eta", value=estimate_eta(res)))
        if search is not None:
            records.append(MetricRecord(method="lambda_search", d=d, seed=seed, metric="best_lambda", value=search.best_lambda))
            records.append(MetricRecord(method="lambda_search", d=d, seed=seed, metric="best_argmin_w", value=search.best_argmin))

    argmins = np.array([res.argmin_w for _, res, _ in outcomes])
    values = np.vstack([res.ksd_values for _, res, _ in outcomes])
    summary = {
        "argmin_w_mean": float(argmins.mean()),
        "argmin_w_sd": float(argmins.std(ddof=1)) if argmins.size > 1 else 0.0,
        "mean_curve_argmin_w": float(grid[int(np.argmin(values.mean(axis=0)))]),
        "eta_mean": float(np.mean([estimate_eta(res) for _, res, _ in outcomes])),
        "lambda": ws.lam,
        "target_w": w_p,
    }
    searches = [s for _, _, s in outcomes if s is not None]
    if searches:
        summary["lambda_search_best_lambda_median"] = float(np.median([s.best_lambda for s in searches]))
        summary["lambda_search_argmin_w_mean"] = float(np.mean([s.best_argmin for s in searches]))
        summary["lambda_search_max_gap"] = float(np.max([abs(s.best_argmin - w_p) for s in searches]))

    report = MetricReport(name=config.name, kind=config.kind, version=__version__,
                          config=config.model_dump(mode="json"), summary=summary, records=records)
    report.notes.append("curve: " + json.dumps({f"{w:.2f}": float(v) for w, v in zip(grid, values.mean(axis=0))}))
    return report


def sweep_curve_rows(report: MetricReport) -> List[Dict[str, float]]:
    """(w, ksd2_mean, ksd2_sd, is_argmin) rows from the per-repeat records of a weight sweep."""
    per_w: Dict[float, List[float]] = {}
    for rec in report.records:
        if rec.method == "sweep" and rec.metric.startswith("ksd2_w"):
            per_w.setdefault(float(rec.metric[len("ksd2_w"):]), []).append(rec.value)
    ws = sorted(per_w)
    means = [float(np.mean(per_w[w])) for w in ws]
    best = int(np.argmin(means))
    return [
        {"w": w, "ksd2_mean": mu, "ksd2_sd": float(np.std(per_w[w], ddof=1)) if len(per_w[w]) > 1 else 0.0,
         "is_argmin": int(i == best)}
        for i, (w, mu) in enumerate(zip(ws, means))
    ]


# ========================================
# kind = pathology_bounds
# ========================================

def run_pathology_bounds(config: ExperimentConfig, max_workers: int = 1, progress: bool = True) -> MetricReport:
    """
    Saddle-pathology thresholds, then KSD^2 / L-KSD^2 of concentrated samples
    against iid expectations for every m up to the sample-size threshold.
    """
    ev = config.evaluation
    spec = config.target.spec()
    seed = config.sampler.seed
    sample = exact_mixture_sample(spec, config.sampler.n, seed)
    kernel = kernel_for(config, sample.points)
    bounds = pathology_bounds(spec, kernel, ev.s0, ev.mc_n, seed)

    point = ev.concentration_point or [0.0] * spec.dim
    ms = ev.concentration_ms or list(range(1, max(1, int(np.ceil(bounds.m_threshold))) + 2))
    check = concentration_check(spec, point, ms, kernel, replicates=ev.mc_n, seed=seed)

    d = spec.dim
    records = []
    for row in check.rows:
        for metric in ("ksd_concentrated", "ksd_expected", "ksd_expected_se",
                       "l_ksd_concentrated", "l_ksd_expected", "l_ksd_expected_se"):
            records.append(MetricRecord(method="concentrated", d=d, m=row.m, seed=seed, metric=metric, value=getattr(row, metric)))

    below = [row.ksd_below for row in check.rows if row.m < bounds.m_threshold]
    summary = {
        "ell": kernel.ell,
        "m_threshold": bounds.m_threshold,
        "s0_max": bounds.s0_max,
        "z_max": bounds.z_max,
        "e_score_sq": bounds.e_score_sq,
        "e_score_sq_se": bounds.e_score_sq_se,
        "density_condition": float(check.density_condition),
        "ksd_below_all": float(all(below)) if below else None,
        "l_ksd_above_all": float(all(row.l_ksd_above for row in check.rows)),
    }
    return MetricReport(name=config.name, kind=config.kind, version=__version__,
                        config=config.model_dump(mode="json"), summary=summary, records=records)


# ========================================
# kind = logistic
# ========================================

def run_logistic(config: ExperimentConfig, max_workers: int = 1, progress: bool = True) -> MetricReport:
    lg = config.logistic
    dataset = load_csv_dataset(lg.dataset_path, lg.label_column, standardize=False)
    cv = CvPlan(n_folds=lg.n_folds, n_repeats=lg.n_repeats, seed=config.sampler.seed)
    report = run_logistic_experiment(dataset, cv, lg, config.thinning, config.methods, max_workers=max_workers,
                                     progress=progress, config=config.model_dump(mode="json"))
    return report.model_copy(update={"name": config.name})


RUNNERS = {
    "thinning": run_thinning,
    "laplacian_operator": run_thinning,
    "weight_sweep": run_weight_sweep,
    "pathology_bounds": run_pathology_bounds,
    "logistic": run_logistic,
}


def run_experiment(config: ExperimentConfig, max_workers: int = 1, progress: bool = True) -> MetricReport:
    if config.kind == "laplacian_operator":
        if config.target.kind in ("banana",):
            raise ConfigError("laplacian_operator experiments need a Gaussian mixture target")
        if config.thinning.beta != 0.5:
            raise ConfigError("laplacian_operator experiments need beta = 0.5")
    return RUNNERS[config.kind](config, max_workers=max_workers, progress=progress)
