from __future__ import annotations

import os


class NameSpace:
    DATA_INTERACTIONS = "interactions.jsonl"
    DATA_PROFILES = "profiles.jsonl"
    DATA_LABELED = "labeled.jsonl"
    DATA_NORM_STATS = "norm_stats.json"
    DATA_STATS = "dataset_stats.json"
    DATA_META = "dataset.json"

    MODEL_CHECKPOINT = "model.json"
    TRAIN_TRACE = "trace.csv"

    REPORT_EVAL = "eval_report.json"
    REPORT_COMPARE = "compare_report.json"
    REPORT_COMPARE_CSV = "compare_report.csv"
    REPORT_STABILITY = "stability_report.json"

    CONFIG_ECHO = "config.json"


def make_namespace(prefix: str, base_namespace: str):
    return prefix + base_namespace


def artifact_path(out_dir: str, base_namespace: str, prefix: str = "") -> str:
    return os.path.join(out_dir, make_namespace(prefix, base_namespace))
