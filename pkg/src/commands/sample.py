# src/commands/sample.py
import logging

from src.commands.common import RunContext, add_config_arguments, load_single_config
from src.core.experiments import draw_sample

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("sample", help="Draw an exact or MALA sample from the configured target")
    add_config_arguments(parser)
    parser.add_argument("--header", action="store_true", help="Write a header row (x1..xd)")
    parser.set_defaults(func=run)


def run(ctx: RunContext) -> int:
    config = load_single_config(ctx.args, ctx.settings)
    sample = draw_sample(config, config.sampler.seed)
    sample.meta = sample.meta.model_copy(update={"target": config.target.model_dump(mode="json")})

    collector = ctx.collector(config.name)
    collector.write_text("sample.csv", sample.to_csv_text(header=ctx.args.header))
    collector.write_json("sample.meta.json", sample.meta.model_dump(mode="json"), config=config.model_dump(mode="json"))
    rate = sample.meta.acceptance_rate
    logger.info(f"✅ Sample: {sample.n} points in d={sample.dim}" + (f", acceptance {rate:.3f}" if rate is not None else ""))
    return 0
