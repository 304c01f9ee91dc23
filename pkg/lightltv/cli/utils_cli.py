"""
Argument parsing, config-file loading and console output for the lightltv CLI.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Callable, Optional

from ascii_colors import ASCIIColors
from dotenv import load_dotenv

from .. import __version__
from ..base import ExperimentConfig, GenConfig, Scheme, TrainConfig
from ..exceptions import ConfigError
from ..models import MODEL_IMPLEMENTATIONS, TABLE_MODELS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Load environment variables
load_dotenv(override=True)

ENV_PREFIX = "LIGHTLTV_"
COMMANDS = ["generate", "standardize", "train", "eval", "compare", "stability"]


def get_env_value(env_key: str, default: Any, value_type: Callable = str) -> Any:
    """
    Get value from environment variable with type conversion

    Args:
        env_key (str): Environment variable key, without the LIGHTLTV_ prefix
        default (any): Default value if env variable is not set
        value_type (type): Type to convert the value to

    Returns:
        any: Converted value from environment or default
    """
    value = os.getenv(ENV_PREFIX + env_key)
    if value is None:
        return default

    if value_type is bool:
        return value.lower() in ("true", "1", "yes", "t", "on")
    try:
        return value_type(value)
    except (ValueError, ConfigError, argparse.ArgumentTypeError):
        return default


def int_list(value: str | list) -> list[int]:
    if isinstance(value, list):
        return [int(v) for v in value]
    try:
        return [int(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")


def str_list(value: str | list) -> list[str]:
    if isinstance(value, list):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def optional_float(value: str | float | None) -> Optional[float]:
    if value is None or str(value).lower() in ("none", "null", ""):
        return None
    return float(value)


def optional_int(value: str | int | None) -> Optional[int]:
    if value is None or str(value).lower() in ("none", "null", ""):
        return None
    return int(value)


def scheme_type(value: str) -> str:
    try:
        return Scheme.parse(value).value
    except ConfigError as e:
        raise argparse.ArgumentTypeError(e.message)


def load_config_file(path: Optional[str]) -> dict[str, Any]:
    """Flat mapping of option names from a TOML or JSON file; tables are flattened."""
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        elif path.endswith(".json"):
            with open(path, encoding="utf-8") as f:
                raw = json.load(f)
        else:
            raise ConfigError(f"config file must be .toml or .json: {path}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config file {path}: {e}") from e

    flat: dict[str, Any] = {}
    for key, value in raw.items():
        if isinstance(value, dict) and key != "model_hyperparams":
            flat.update({k.replace("-", "_"): v for k, v in value.items()})
        else:
            flat[key.replace("-", "_")] = value
    return flat


# (flag, dest type, built-in default, help)
OPTIONS: list[tuple[str, Callable, Any, str]] = [
    ("--out", str, "./lightltv_out", "Output directory"),
    ("--data", str, None, "Existing dataset directory (default: generate synthetic data)"),
    ("--seed", int, 0, "Seed for generation, initialization and sampling"),
    ("--users", int, 5000, "Synthetic users"),
    ("--paid-games", int, 432, "Paid-game catalog size"),
    ("--download-games", int, 7507, "Downloaded-app catalog size"),
    ("--days", int, 31, "Days in the synthetic window"),
    ("--zero-rate", float, 0.979, "Fraction of zero-spend interactions"),
    ("--spend-median", float, 11.0, "Median non-zero spend"),
    ("--tail-shape", float, 0.4, "Lognormal sigma of per-interaction spend noise"),
    ("--interactions-per-user", float, 20.0, "Mean interactions per synthetic user"),
    ("--active-days", optional_int, None, "Days each synthetic user stays active ('none': the whole window)"),
    ("--scheme", scheme_type, "bs", "Label standardization: ov, log, us, gs, bs"),
    ("--model", str, "collab", f"Model type: {', '.join(MODEL_IMPLEMENTATIONS)}"),
    ("--models", str_list, TABLE_MODELS, "Comma-separated models for compare"),
    ("--k", int_list, [1, 5, 10], "Comma-separated ranking cutoffs"),
    ("--runs", int, 3, "Repeated runs for compare and stability"),
    ("--seeds", int_list, [], "Explicit comma-separated run seeds"),
    ("--epochs", int, 20, "Training epochs"),
    ("--batch-size", int, 1024, "Mini-batch size"),
    ("--lr", float, 1e-5, "Adam learning rate"),
    ("--eval-every", int, 0, "Steps between evaluation points (0: once per epoch)"),
    ("--patience", int, 3, "Early-stopping patience in evaluation points (0: off)"),
    ("--zero-ratio", optional_float, 4.0, "Zero:paid rows kept per epoch ('none' keeps all)"),
    ("--eval-cases", int, 2000, "Ranking cases per evaluation point during training"),
    ("--embed-dim", int, 8, "Latent dimension of every model"),
    ("--train-days", int, 30, "Days used for training; later days are the test set"),
    ("--val-days", int, 1, "Last training days held out for monitoring"),
    ("--stability-mode", str, "retrain", "Stability protocol: retrain or daily"),
    ("--checkpoint", str, None, "Checkpoint to evaluate (default: <out>/model.json)"),
    ("--test", str, None, "Dataset directory to evaluate on (default: the temporal test split)"),
    ("--report", str, "json", "Report format: json or csv"),
    ("--threads", int, 1, "Worker threads for generation and scoring"),
    ("--log-level", str, "INFO", "Logging level"),
]

BOOL_OPTIONS: list[tuple[str, str]] = [
    ("--exclude-interacted", "Exclude all of the user's games from ranking negatives"),
    ("--include-zeros", "Include zero spends in per-game statistics"),
    ("--verbose", "Enable verbose debug output (only valid for DEBUG log-level)"),
]


def _dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments with config-file and environment fallback

    Precedence: built-in default < config file < LIGHTLTV_* environment < flag.

    Returns:
        argparse.Namespace: Parsed arguments
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=get_env_value("CONFIG", None))
    known, _ = pre.parse_known_args(argv)
    file_values = load_config_file(known.config)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default=known.config,
        help="TOML or JSON config file (default: from env LIGHTLTV_CONFIG)",
    )
    for flag, value_type, default, help_text in OPTIONS:
        dest = _dest(flag)
        base = file_values.get(dest, default)
        common.add_argument(
            flag,
            type=value_type,
            default=get_env_value(dest.upper(), base, value_type),
            help=f"{help_text} (default: from env {ENV_PREFIX}{dest.upper()} or {base})",
        )
    for flag, help_text in BOOL_OPTIONS:
        dest = _dest(flag)
        common.add_argument(
            flag,
            action=argparse.BooleanOptionalAction,
            default=get_env_value(dest.upper(), bool(file_values.get(dest, False)), bool),
            help=help_text,
        )

    parser = argparse.ArgumentParser(
        prog="lightltv",
        description="Spend-prediction workbench: synthetic data, label standardization, model zoo and stable evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])

    args = parser.parse_args(argv)
    args.model_hyperparams = file_values.get("model_hyperparams", {})
    return args


def build_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.report not in ("json", "csv"):
        raise ConfigError(f"--report must be json or csv, got '{args.report}'")
    hyperparams = {}
    for model_type in MODEL_IMPLEMENTATIONS:
        hyperparams[model_type] = {"embed_dim": args.embed_dim, **args.model_hyperparams.get(model_type, {})}
    gen = GenConfig(
        n_users=args.users,
        n_paid_games=args.paid_games,
        n_download_games=args.download_games,
        n_days=args.days,
        zero_rate=args.zero_rate,
        spend_median=args.spend_median,
        tail_shape=args.tail_shape,
        interactions_per_user=args.interactions_per_user,
        active_days=args.active_days,
        seed=args.seed,
    )
    train = TrainConfig(
        scheme=args.scheme,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lr=args.lr,
        seed=args.seed,
        eval_every=args.eval_every,
        patience=args.patience,
        zero_ratio=args.zero_ratio,
        eval_cases=args.eval_cases,
        threads=args.threads,
    )
    return ExperimentConfig(
        gen=gen,
        train=train,
        data_dir=args.data,
        model_type=args.model,
        models=list(args.models),
        ks=list(args.k),
        n_runs=args.runs,
        seeds=list(args.seeds),
        train_days=args.train_days,
        val_days=args.val_days,
        stability_mode=args.stability_mode,
        exclude_interacted=args.exclude_interacted,
        include_zeros=args.include_zeros,
        model_hyperparams=hyperparams,
        output_dir=args.out,
        threads=args.threads,
    )


def display_splash_screen(args: argparse.Namespace) -> None:
    """
    Display a colorful summary of the resolved configuration

    Args:
        args: Parsed command line arguments
    """
    ASCIIColors.cyan(f"""
    ╔══════════════════════════════════════════════════════════════╗
    ║                      LightLTV v{__version__}                         ║
    ║       Spend prediction with stable training and evaluation   ║
    ╚══════════════════════════════════════════════════════════════╝
    """)

    ASCIIColors.magenta(f"\n⚙️  Command: {args.command}")
    ASCIIColors.white("    ├─ Output: ", end="")
    ASCIIColors.yellow(f"{args.out}")
    ASCIIColors.white("    ├─ Data: ", end="")
    ASCIIColors.yellow(f"{args.data or 'synthetic'}")
    ASCIIColors.white("    ├─ Seed: ", end="")
    ASCIIColors.yellow(f"{args.seed}")
    ASCIIColors.white("    ├─ Scheme: ", end="")
    ASCIIColors.yellow(f"{args.scheme}")
    ASCIIColors.white("    ├─ Model: ", end="")
    ASCIIColors.yellow(f"{args.model}")
    ASCIIColors.white("    ├─ Runs: ", end="")
    ASCIIColors.yellow(f"{args.runs}")
    ASCIIColors.white("    ├─ Threads: ", end="")
    ASCIIColors.yellow(f"{args.threads}")
    ASCIIColors.white("    ├─ Log Level: ", end="")
    ASCIIColors.yellow(f"{args.log_level}")
    ASCIIColors.white("    └─ Verbose Debug: ", end="")
    ASCIIColors.yellow(f"{args.verbose}")
