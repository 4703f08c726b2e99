# src/commands/experiment.py
import logging

import pandas as pd

from src.commands.common import RunContext, add_config_arguments, load_configs
from src.core.artifacts import ArtifactCollector
from src.core.experiments import run_experiment, sweep_curve_rows
from src.core.models import MetricReport

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("experiment", help="Run an experiment config or preset (repeats, sweeps)")
    add_config_arguments(parser)
    parser.set_defaults(func=run)


def write_report(collector: ArtifactCollector, report: MetricReport):
    """<name>.json (summary + notes + config + version) and <name>.csv (long-format records)."""
    collector.write_json(f"{report.name}.json", report.model_dump(mode="json", exclude={"records"}), config=report.config)
    collector.write_records(f"{report.name}.csv", report.records)
    if report.kind == "weight_sweep":
        collector.write_frame(f"{report.name}_curve.csv", pd.DataFrame(sweep_curve_rows(report)))


def run(ctx: RunContext) -> int:
    suite_name, configs = load_configs(ctx.args, ctx.settings)
    collector = ctx.collector(suite_name)
    for i, config in enumerate(configs, 1):
        logger.info(f"🔄 [{i}/{len(configs)}] {config.name} ({config.kind})")
        report = run_experiment(config, max_workers=ctx.threads, progress=ctx.progress)
        write_report(collector, report)
        highlights = ", ".join(f"{k}={v:.4g}" for k, v in list(report.summary.items())[:6] if v is not None)
        logger.info(f"✅ {config.name}: {highlights}")
    return 0
