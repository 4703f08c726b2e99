"""
Tests for experiment config loading and the per-kind runners on small configs.

    pytest tests/test_experiments.py -v
"""

import glob
import io
import json
import os

import numpy as np
import pandas as pd
import pytest

from src.core.config import PRESETS_DIR
from src.core.errors import ConfigError
from src.core.experiments import (
    fan_out,
    kernel_for,
    load_experiments,
    parse_experiments,
    resolve_preset_path,
    run_experiment,
    sweep_curve_rows,
    weight_grid,
    with_seed,
)
from src.core.models import ExperimentConfig
from src.core.utils import progress_bar

PRESETS = sorted(glob.glob(os.path.join(PRESETS_DIR, "*.json")))


def _config(**overrides) -> ExperimentConfig:
    document = {
        "name": "small",
        "kind": "thinning",
        "target": {"kind": "example_mixture", "mu": 3.0, "sigma": 1.0, "w": 0.2, "dim": 2},
        "sampler": {"type": "exact", "n": 200, "seed": 1},
        "thinning": {"m": 10},
        "evaluation": {"repeats": 2},
    }
    document.update(overrides)
    return ExperimentConfig.model_validate(document)


# ── loading ─────────────────────────────────────────────────────────────────

class TestConfigLoading:

    def test_named_presets_ship(self):
        names = {os.path.basename(p)[:-5] for p in PRESETS}
        assert {"fig1-pathology1", "fig2-pathology2", "fig4-exact-mixtures", "fig6-banana-mala",
                "fig6-gm-mala", "appA1-weight-sweep", "table1-logistic"} <= names

    @pytest.mark.parametrize("path", PRESETS, ids=lambda p: os.path.basename(p))
    def test_presets_validate(self, path):
        name, configs = load_experiments(path)
        assert name == os.path.basename(path)[:-5]
        assert configs

    def test_suite(self):
        name, configs = load_experiments(resolve_preset_path("fig4-exact-mixtures"))
        assert [c.name for c in configs] == ["weighted-four-mode", "ring"]

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            resolve_preset_path("no-such-preset")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "target": {"kind": "ring"}, "thinnning": {"m": 3}})
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "target": {"kind": "ring", "radius": 3.0, "sides": 6}})

    def test_kind_requirements(self):
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "kind": "thinning"})
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "kind": "logistic"})
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "target": {"kind": "ring"}, "sweep": {"dims": [2, 4]}})

    def test_fixed_rules_need_values(self):
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "target": {"kind": "ring"}, "thinning": {"ell_mode": "fixed"}})
        with pytest.raises(ConfigError):
            parse_experiments({"name": "x", "target": {"kind": "ring"}, "thinning": {"lambda_rule": "fixed"}})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_experiments(str(path))

    def test_with_seed(self):
        config = _config()
        assert with_seed(config, None) is config
        assert with_seed(config, 99).sampler.seed == 99
        assert config.sampler.seed == 1

    def test_bandwidth_scale(self):
        pts = np.random.default_rng(3).standard_normal((100, 2))
        plain = kernel_for(_config(), pts).ell
        assert kernel_for(_config(thinning={"m": 10, "ell_scale": 2.0}), pts).ell == pytest.approx(2.0 * plain)
        fixed = _config(thinning={"m": 10, "ell_mode": "fixed", "ell": 0.8, "ell_scale": 2.0})
        assert kernel_for(fixed, pts).ell == 0.8

    @pytest.mark.parametrize("name,scale", [("fig1-pathology1", 1.0), ("fig2-pathology2", 2.0), ("fig6-gm-mala", 2.0)])
    def test_preset_bandwidth_scales(self, name, scale):
        _, configs = load_experiments(resolve_preset_path(name))
        assert configs[0].thinning.ell_scale == scale


# ── thinning runs ───────────────────────────────────────────────────────────

class TestRunThinning:

    def test_summary_keys(self):
        report = run_experiment(_config(), progress=False)
        for method in ("st", "rst"):
            for metric in ("left_mode", "right_mode", "ksd2"):
                assert f"{method}_{metric}_mean" in report.summary
                assert f"{method}_{metric}_sd" in report.summary
        assert report.summary["st_left_mode_mean"] + report.summary["st_right_mode_mean"] == pytest.approx(1.0)
        assert {r.seed for r in report.records} == {1, 2}
        assert report.config["name"] == "small"

    def test_threads_do_not_change_results(self):
        config = _config()
        assert run_experiment(config, max_workers=1, progress=False).records == \
            run_experiment(config, max_workers=2, progress=False).records

    def test_band_and_mmd(self):
        config = _config(
            target={"kind": "example_mixture", "mu": 2.0, "sigma": 1.0, "w": 0.5, "dim": 2},
            evaluation={"repeats": 2, "band_halfwidth": "z_max", "mmd": True, "mmd_reference_size": 300},
        )
        report = run_experiment(config, progress=False)
        assert "st_band_count_mean" in report.summary
        assert 0 <= report.summary["st_band_hit_seeds"] <= 2
        assert report.summary["rst_mmd_median"] >= 0.0

    def test_z_max_needs_a_saddle(self):
        config = _config(
            target={"kind": "example_mixture", "mu": 0.5, "sigma": 1.0, "w": 0.5, "dim": 2},
            evaluation={"repeats": 1, "band_halfwidth": "z_max"},
        )
        with pytest.raises(ConfigError):
            run_experiment(config, progress=False)

    def test_swept_axes_in_keys(self):
        config = _config(sweep={"ms": [5, 10], "dims": [2, 3]}, evaluation={"repeats": 1})
        report = run_experiment(config, progress=False)
        assert "st_ksd2_d3_m5_mean" in report.summary
        assert {r.d for r in report.records} == {2, 3}

    def test_mala_sampler(self):
        config = _config(
            target={"kind": "banana", "dim": 2},
            sampler={"type": "mala", "n": 300, "step_size": 0.5, "seed": 0},
            sweep={"step_sizes": [0.3, 0.6]},
            evaluation={"repeats": 1, "mmd": True, "mmd_reference_size": 200},
        )
        report = run_experiment(config, progress=False)
        assert "st_mmd_eps0.3_mean" in report.summary
        assert {r.eps for r in report.records} == {0.3, 0.6}

    def test_laplacian_operator_kind(self):
        config = _config(kind="laplacian_operator", methods=[{"name": "lap", "method": "laplacian"}],
                         target={"kind": "example_mixture", "mu": 2.0, "sigma": 1.0, "w": 0.5, "dim": 2})
        report = run_experiment(config, progress=False)
        assert "lap_ksd2_mean" in report.summary

    def test_laplacian_operator_rejects_banana(self):
        config = _config(kind="laplacian_operator", target={"kind": "banana", "dim": 2})
        with pytest.raises(ConfigError):
            run_experiment(config, progress=False)


# ── weight sweep / bounds / logistic ────────────────────────────────────────

class TestOtherKinds:

    def test_weight_grid(self):
        config = _config(kind="weight_sweep", weight_sweep={})
        grid = weight_grid(config)
        assert grid.size == 17
        assert grid[0] == 0.1 and grid[-1] == 0.9

    def test_weight_sweep_report(self):
        config = _config(kind="weight_sweep", sampler={"type": "exact", "n": 600, "seed": 0},
                         weight_sweep={"lambda_search": True, "lambda_num": 11})
        report = run_experiment(config, progress=False)
        assert 0.1 <= report.summary["argmin_w_mean"] <= 0.9
        assert report.summary["target_w"] == 0.2
        assert "lambda_search_best_lambda_median" in report.summary
        rows = sweep_curve_rows(report)
        assert len(rows) == 17
        assert sum(r["is_argmin"] for r in rows) == 1
        best = next(r for r in rows if r["is_argmin"])
        assert best["w"] == pytest.approx(report.summary["mean_curve_argmin_w"])

    def test_weight_sweep_needs_section(self):
        with pytest.raises(ConfigError):
            run_experiment(_config(kind="weight_sweep"), progress=False)

    def test_pathology_bounds_report(self):
        config = _config(
            kind="pathology_bounds",
            target={"kind": "example_mixture", "mu": 3.0, "sigma": 1.0, "w": 0.5, "dim": 2},
            thinning={"ell_mode": "fixed", "ell": 1.0},
            evaluation={"mc_n": 500, "concentration_ms": [1, 3]},
        )
        report = run_experiment(config, progress=False)
        assert report.summary["ell"] == 1.0
        assert report.summary["z_max"] == pytest.approx(0.58758, abs=1e-5)
        assert report.summary["density_condition"] == 1.0
        assert {r.m for r in report.records} == {1, 3}

    def test_logistic_report(self, tmp_path):
        x = np.linspace(-2.0, 2.0, 40)
        path = tmp_path / "toy.csv"
        pd.DataFrame({"x": x, "label": (x > 0).astype(int)}).to_csv(path, index=False)
        config = ExperimentConfig.model_validate({
            "name": "toy-logistic", "kind": "logistic",
            "logistic": {"dataset_path": str(path), "label_column": "label", "n_folds": 2, "n_repeats": 1,
                         "n_chains": 1, "n_steps": 100, "step_sizes": [0.1], "ms": [10]},
        })
        report = run_experiment(config, progress=False)
        assert report.name == "toy-logistic"
        assert "rst_m10_auc_mean" in report.summary
        assert json.loads(json.dumps(report.config))["logistic"]["n_folds"] == 2


# ── progress bars ───────────────────────────────────────────────────────────

class _Terminal(io.StringIO):
    def isatty(self):
        return True


class TestProgressBar:

    def test_silent_off_a_terminal(self):
        bar = progress_bar(3, "runs", "run", True, file=io.StringIO())
        assert bar.disable
        bar.close()

    def test_shown_on_a_terminal(self):
        stream = _Terminal()
        bar = progress_bar(3, "runs", "run", True, file=stream)
        bar.update(3)
        bar.close()
        assert not bar.disable
        assert "runs" in stream.getvalue()

    def test_quiet_wins(self):
        bar = progress_bar(3, "runs", "run", False, file=_Terminal())
        assert bar.disable
        bar.close()

    def test_fan_out_keeps_index_order(self):
        assert fan_out(lambda i: i * i, 6, max_workers=3, progress=False, desc="x") == [0, 1, 4, 9, 16, 25]
