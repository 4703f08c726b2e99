# src/main.py
import sys
import logging
import argparse

from src import __version__
from src.commands import evaluate, experiment, logistic, sample, thin
from src.commands.common import RunContext
from src.core.errors import SteinThinningError
from src.settings import init_settings

logger = logging.getLogger(__name__)

# One sub-command module per verb; each registers its own parser.
COMMANDS = [sample, thin, evaluate, experiment, logistic]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rst",
        description="Stein thinning and regularized Stein thinning of MCMC output",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--out-dir", help="Root output directory (default: RST_OUT_DIR or ./runs)")
    parser.add_argument("--seed", type=int, help="Override sampler.seed")
    parser.add_argument("--threads", type=int, help="Worker count for repeats / folds (default: RST_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", action="store_true", help="Disable progress bars")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def main(argv=None) -> int:
    settings = init_settings()
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format='%(asctime)s - %(levelname)s - %(message)s',
    )

    ctx = RunContext(args, settings)
    try:
        return args.func(ctx)
    except (SteinThinningError, OSError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        ctx.rollback()
        return 1
    except Exception as e:
        logger.exception(f"❌ Unexpected error in {args.command}: {e}")
        ctx.rollback()
        return 2


if __name__ == '__main__':
    sys.exit(main())
