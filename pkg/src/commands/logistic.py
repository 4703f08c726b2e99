# src/commands/logistic.py
import logging

from src.commands.common import RunContext, add_config_arguments, load_single_config
from src.commands.experiment import write_report
from src.core.errors import ConfigError
from src.core.experiments import run_logistic

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("logistic", help="Bayesian logistic regression: CV AUC of ST vs RST")
    add_config_arguments(parser)
    parser.add_argument("--dataset", help="Override logistic.dataset_path")
    parser.add_argument("--label", help="Override logistic.label_column")
    parser.set_defaults(func=run)


def run(ctx: RunContext) -> int:
    config = load_single_config(ctx.args, ctx.settings)
    if config.logistic is None:
        raise ConfigError("the logistic command needs a config with a logistic section")
    updates = {}
    if ctx.args.dataset:
        updates["dataset_path"] = ctx.args.dataset
    if ctx.args.label:
        updates["label_column"] = ctx.args.label
    if updates:
        config = config.model_copy(update={"logistic": config.logistic.model_copy(update=updates)})

    report = run_logistic(config, max_workers=ctx.threads, progress=ctx.progress)
    write_report(ctx.collector(config.name), report)
    for note in report.notes:
        logger.warning(f"⚠️ {note}")
    return 0
