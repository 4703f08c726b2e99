# src/commands/evaluate.py
import logging

import numpy as np
import pandas as pd

from src.commands.common import RunContext, add_config_arguments, load_single_config
from src.core.diagnostics import energy_mmd, mode_proportions
from src.core.errors import DimensionMismatchError
from src.core.experiments import MMD_REFERENCE_SEED_OFFSET, kernel_for, mode_setup
from src.core.models import build_target
from src.core.samplers import SampleSet, exact_mixture_sample
from src.core.thinning import CandidatePool, entropic_ksd_squared, ksd_squared, l_ksd_squared, lambda_for_rule

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("eval", help="KSD^2, L-KSD^2, mode proportions and MMD of a (thinned) sample")
    add_config_arguments(parser)
    parser.add_argument("--sample", required=True, help="Candidate sample CSV")
    parser.add_argument("--indices", help="Selected indices CSV written by `thin` (whole sample if omitted)")
    parser.add_argument("--header", action="store_true", help="The CSV files have a header row")
    parser.set_defaults(func=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    config = load_single_config(args, ctx.settings)
    sample = SampleSet.from_csv(args.sample, header=args.header)
    model = build_target(config.target)
    if sample.dim != model.dim:
        raise DimensionMismatchError(f"sample has d={sample.dim} but the target has d={model.dim}")

    pool = CandidatePool.from_model(model, sample.points, kernel=kernel_for(config, sample.points))
    if args.indices:
        indices = pd.read_csv(args.indices, header=0 if args.header else None).iloc[:, 0].to_numpy(dtype=int)
    else:
        indices = np.arange(pool.n)
    m = int(indices.size)

    lam = lambda_for_rule(config.thinning.lambda_rule, m, config.thinning.lam)
    metrics = {
        "m": m,
        "ell": pool.kernel.ell,
        "ksd2": ksd_squared(pool, indices),
        "l_ksd2": l_ksd_squared(pool, indices),
        "entropic_ksd2": entropic_ksd_squared(pool, lam=lam, indices=indices),
        "lambda": lam,
    }
    centers, labels = mode_setup(config, config.target)
    for label, share in zip(labels, mode_proportions(pool.points[indices], centers)):
        metrics[f"{label}_mode"] = float(share)
    if config.evaluation.mmd:
        reference = exact_mixture_sample(config.target.spec(), config.evaluation.mmd_reference_size,
                                         config.sampler.seed + MMD_REFERENCE_SEED_OFFSET)
        metrics["mmd"] = energy_mmd(pool.points[indices], reference, unbiased=config.evaluation.mmd_unbiased)

    collector = ctx.collector(config.name)
    collector.write_json("eval.json", {"metrics": metrics, "sample": args.sample, "indices": args.indices},
                         config=config.model_dump(mode="json"))
    logger.info(f"✅ Evaluated {m} points: KSD^2 = {metrics['ksd2']:.6g}")
    return 0
