"""
lightltv command line entry point
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import pandas as pd
from ascii_colors import ASCIIColors

from ..checkpoint import load_checkpoint
from ..data import load_dataset, split_temporal
from ..exceptions import LightLTVError
from ..lightltv import LightLTV
from ..namespace import NameSpace, artifact_path
from ..standardize import LabeledDataset, write_labeled, write_norm_stats
from ..utils import logger, set_verbose_debug, setup_logger, write_json
from .utils_cli import build_experiment_config, display_splash_screen, parse_args


def _write_labeled_outputs(ltv: LightLTV, labeled: LabeledDataset) -> None:
    write_labeled(labeled, ltv.output_dir, NameSpace.DATA_LABELED)
    write_norm_stats(labeled.standardizer, artifact_path(ltv.output_dir, NameSpace.DATA_NORM_STATS))


def cmd_generate(ltv: LightLTV, args: argparse.Namespace) -> None:
    ds = ltv.generate()
    ASCIIColors.green(f"Generated {len(ds)} interactions for {len(ds.profiles)} users in {ltv.output_dir}")


def cmd_standardize(ltv: LightLTV, args: argparse.Namespace) -> None:
    train, _ = split_temporal(ltv.dataset(), ltv.config.train_days)
    labeled = ltv.standardize(train)
    _write_labeled_outputs(ltv, labeled)
    ltv.echo_config()
    ASCIIColors.green(f"Wrote {len(labeled)} {labeled.scheme.value} targets to {ltv.output_dir}")


def cmd_train(ltv: LightLTV, args: argparse.Namespace) -> None:
    run = ltv.train_and_save()
    _write_labeled_outputs(ltv, run.labeled)
    last = run.trace.points[-1]
    ASCIIColors.green(
        f"Trained {run.model.model_type}: {last.step} steps, loss={last.loss:.6f}, hr10={last.hr10}"
    )


def cmd_eval(ltv: LightLTV, args: argparse.Namespace) -> None:
    checkpoint = args.checkpoint or artifact_path(ltv.output_dir, NameSpace.MODEL_CHECKPOINT)
    model, standardizer = load_checkpoint(checkpoint)
    if args.test:
        test = load_dataset(args.test)
        seen = None
    else:
        seen, test = split_temporal(ltv.dataset(), ltv.config.train_days)
    report = ltv.evaluate(model, test, standardizer, seen=seen)
    write_json(report.model_dump(), artifact_path(ltv.output_dir, NameSpace.REPORT_EVAL))
    if args.report == "csv":
        row = {"model": report.model_type}
        row.update({f"HR@{k}": v for k, v in report.hr.items()})
        row.update({f"NDCG@{k}": v for k, v in report.ndcg.items()})
        row.update({"RMSE": report.rmse, "R2": report.r2, "AUC": report.auc})
        row.update({"paid_RMSE": report.paid.rmse, "paid_R2": report.paid.r2})
        path = os.path.splitext(artifact_path(ltv.output_dir, NameSpace.REPORT_EVAL))[0] + ".csv"
        pd.DataFrame([row]).to_csv(path, index=False, float_format="%.6f")
    ltv.echo_config({"checkpoint": checkpoint})
    ASCIIColors.green(json.dumps({"hr": report.hr, "ndcg": report.ndcg, "r2": report.r2, "auc": report.auc}))


def cmd_compare(ltv: LightLTV, args: argparse.Namespace) -> None:
    report = ltv.compare()
    for row in report.rows:
        ASCIIColors.white(f"    {row.model_type:<10}", end="")
        ASCIIColors.yellow("  ".join(f"{k}={v:.4f}" for k, v in row.metrics.items()))
    ASCIIColors.green(f"Best model: {report.best_model} (p={report.p_value})")


def cmd_stability(ltv: LightLTV, args: argparse.Namespace) -> None:
    summary = ltv.stability()
    for r in summary.reports:
        ASCIIColors.white(f"    {r.metric:<10}", end="")
        ASCIIColors.yellow(f"mean={r.mean} std={r.std} cov={r.cov}")


COMMAND_HANDLERS = {
    "generate": cmd_generate,
    "standardize": cmd_standardize,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "stability": cmd_stability,
}


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except LightLTVError as e:
        ASCIIColors.red(f"Error: {e.message}")
        return e.exit_code

    os.makedirs(args.out, exist_ok=True)
    setup_logger(args.log_level, log_file_path=os.path.join(args.out, "lightltv.log"))
    set_verbose_debug(args.verbose)
    display_splash_screen(args)

    try:
        ltv = LightLTV(config=build_experiment_config(args))
        COMMAND_HANDLERS[args.command](ltv, args)
    except LightLTVError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        ASCIIColors.red(json.dumps(e.to_dict(), default=str))
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
