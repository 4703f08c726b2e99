# src/commands/thin.py
import logging

import numpy as np
import pandas as pd

from src.commands.common import RunContext, add_config_arguments, load_single_config
from src.core.errors import DimensionMismatchError
from src.core.experiments import kernel_for, thin
from src.core.models import MethodConfig, build_target
from src.core.samplers import SampleSet
from src.core.thinning import CandidatePool

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("thin", help="Thin a sample CSV with Stein thinning (st, rst or laplacian)")
    add_config_arguments(parser)
    parser.add_argument("--sample", required=True, help="Sample CSV (one point per row)")
    parser.add_argument("--header", action="store_true", help="The sample CSV has a header row")
    parser.set_defaults(func=run)


def run(ctx: RunContext) -> int:
    config = load_single_config(ctx.args, ctx.settings)
    sample = SampleSet.from_csv(ctx.args.sample, header=ctx.args.header)
    model = build_target(config.target)
    if sample.dim != model.dim:
        raise DimensionMismatchError(f"sample has d={sample.dim} but the target has d={model.dim}")

    t = config.thinning
    pool = CandidatePool.from_model(model, sample.points, kernel=kernel_for(config, sample.points))
    method = MethodConfig(name=t.method, method=t.method, lambda_rule=t.lambda_rule, lam=t.lam)
    result = thin(pool, method, t.m, model)

    trace = pd.DataFrame({
        "t": np.arange(1, result.m + 1),
        "index": result.indices,
        "objective": result.objective_trace,
        "ksd2": result.ksd_trace,
    })
    collector = ctx.collector(config.name)
    collector.write_frame("indices.csv", pd.DataFrame({"index": result.indices}), header=ctx.args.header)
    collector.write_frame("trace.csv", trace)
    collector.write_json("thin.json", {
        "method": result.method,
        "m": result.m,
        "n": pool.n,
        "lambda": result.lam,
        "ell": pool.kernel.ell,
        "final_ksd2": float(result.ksd_trace[-1]),
        "sample": ctx.args.sample,
    }, config=config.model_dump(mode="json"))
    logger.info(f"✅ Thinned {pool.n} -> {result.m} points ({result.method}), KSD^2 = {result.ksd_trace[-1]:.6g}")
    return 0
