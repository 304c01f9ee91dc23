from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError
from scipy.optimize import brentq

from .base import Dataset, GameSpendStats, GenConfig, UserProfile
from .exceptions import ConfigError, DataError
from .namespace import NameSpace
from .types import (
    MAX_HISTORY_LEN,
    DatasetStats,
    InteractionRecord,
    LabeledRecord,
    ProfileRecord,
)
from .utils import iter_jsonl, load_json, logger, write_json, write_jsonl


def _validation_to_data_error(e: ValidationError, row: int, path: str) -> DataError:
    first = e.errors()[0]
    column = str(first["loc"][0]) if first.get("loc") else None
    message = first["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, ") :]
    return DataError(message, row=row, column=column, path=path)


def _read_records(path: str, model: type[BaseModel]) -> list[tuple[int, BaseModel]]:
    records = []
    try:
        for line_number, obj in iter_jsonl(path):
            try:
                records.append((line_number, model.model_validate(obj)))
            except ValidationError as e:
                raise _validation_to_data_error(e, line_number, path) from e
    except json.JSONDecodeError as e:
        raise DataError(f"JSON decoding error: {e.msg}", row=e.lineno, path=path) from e
    return records


def _read_csv_interactions(path: str) -> list[tuple[int, InteractionRecord]]:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"CSV parse error: {e}", path=path) from e
    missing = [c for c in ("user", "game", "day", "spend") if c not in frame.columns]
    if missing:
        raise DataError(f"missing required columns {missing}", column=missing[0], path=path)
    records = []
    # header is line 1
    for i, row in enumerate(frame[["user", "game", "day", "spend"]].to_dict("records")):
        line_number = i + 2
        try:
            records.append((line_number, InteractionRecord.model_validate(row)))
        except ValidationError as e:
            raise _validation_to_data_error(e, line_number, path) from e
    return records


def _resolve_paths(path: str, format: Optional[str], profiles_path: Optional[str]):
    if os.path.isdir(path):
        data_dir = path
        jsonl = os.path.join(path, NameSpace.DATA_INTERACTIONS)
        csv = os.path.splitext(jsonl)[0] + ".csv"
        interactions = jsonl if os.path.exists(jsonl) or not os.path.exists(csv) else csv
    else:
        data_dir = os.path.dirname(path)
        interactions = path
    if format is None:
        format = "csv" if interactions.endswith(".csv") else "jsonl"
    if format not in ("jsonl", "csv"):
        raise ConfigError(f"Unknown dataset format '{format}'; expected jsonl or csv")
    if profiles_path is None:
        profiles_path = os.path.join(data_dir, NameSpace.DATA_PROFILES)
    for p in (interactions, profiles_path):
        if not os.path.exists(p):
            raise DataError("file not found", path=p)
    return data_dir, interactions, format, profiles_path


def load_dataset(
    path: str,
    format: Optional[str] = None,
    profiles_path: Optional[str] = None,
    paid_catalog_size: Optional[int] = None,
    download_catalog_size: Optional[int] = None,
) -> Dataset:
    """Load interactions plus profiles into a Dataset, preserving row order.

    ``path`` is either an interactions file or a directory holding
    ``interactions.jsonl`` (or ``.csv``) and ``profiles.jsonl``. Catalog sizes
    default to the values recorded next to the data, then to max id + 1.
    """
    data_dir, interactions_path, format, profiles_path = _resolve_paths(path, format, profiles_path)

    if format == "csv":
        rows = _read_csv_interactions(interactions_path)
    else:
        rows = _read_records(interactions_path, InteractionRecord)
    profile_rows = _read_records(profiles_path, ProfileRecord)

    profiles: dict[int, UserProfile] = {}
    for line_number, rec in profile_rows:
        if rec.user in profiles:
            raise DataError(f"duplicate profile for user {rec.user}", row=line_number, column="user", path=profiles_path)
        profiles[rec.user] = UserProfile(
            user_id=rec.user,
            download_history=tuple(rec.history),
            total_spend_180=rec.t180,
            payment_count_180=rec.f180,
        )

    meta = load_json(os.path.join(data_dir, NameSpace.DATA_META)) or {}
    max_game = max((r.game for _, r in rows), default=0)
    max_app = max((max(p.download_history) for p in profiles.values()), default=0)
    paid = paid_catalog_size or meta.get("paid_catalog_size") or max_game + 1
    downloads = download_catalog_size or meta.get("download_catalog_size") or max_app + 1

    for line_number, rec in rows:
        if rec.game >= paid:
            raise DataError(
                f"game {rec.game} outside paid catalog of size {paid}",
                row=line_number,
                column="game",
                path=interactions_path,
            )
        if rec.user not in profiles:
            raise DataError(f"user {rec.user} has no profile", row=line_number, column="user", path=interactions_path)

    ds = Dataset(
        users=np.array([r.user for _, r in rows], dtype=np.int64),
        games=np.array([r.game for _, r in rows], dtype=np.int64),
        days=np.array([r.day for _, r in rows], dtype=np.int64),
        spends=np.array([r.spend for _, r in rows], dtype=np.float64),
        profiles=profiles,
        paid_catalog_size=int(paid),
        download_catalog_size=int(downloads),
        rng_seed=int(meta.get("rng_seed", 0)),
    )
    logger.info(f"Loaded {len(ds)} interactions and {len(profiles)} profiles from {interactions_path}")
    return ds


def _profile_row(p: UserProfile) -> dict[str, Any]:
    return {
        "user": p.user_id,
        "history": list(p.download_history),
        "t180": p.total_spend_180,
        "f180": p.payment_count_180,
    }


def interaction_rows(ds: Dataset, targets: Optional[np.ndarray] = None):
    for i in range(len(ds)):
        row = {
            "user": int(ds.users[i]),
            "game": int(ds.games[i]),
            "day": int(ds.days[i]),
            "spend": float(ds.spends[i]),
        }
        if targets is not None:
            row["target"] = float(targets[i])
        yield row


def read_labeled(path: str) -> list[LabeledRecord]:
    if not os.path.exists(path):
        raise DataError("file not found", path=path)
    return [rec for _, rec in _read_records(path, LabeledRecord)]


def write_dataset(ds: Dataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    n = write_jsonl(interaction_rows(ds), os.path.join(out_dir, NameSpace.DATA_INTERACTIONS))
    write_jsonl(
        (_profile_row(ds.profiles[u]) for u in sorted(ds.profiles)),
        os.path.join(out_dir, NameSpace.DATA_PROFILES),
    )
    write_json(
        {
            "paid_catalog_size": ds.paid_catalog_size,
            "download_catalog_size": ds.download_catalog_size,
            "rng_seed": ds.rng_seed,
        },
        os.path.join(out_dir, NameSpace.DATA_META),
    )
    logger.info(f"Wrote {n} interactions and {len(ds.profiles)} profiles to {out_dir}")


def history_success_prob(mean_len: float, cap: int = MAX_HISTORY_LEN) -> float:
    """Geometric success probability whose length, capped at ``cap``, has mean ``mean_len``."""
    if mean_len <= 1.0:
        return 1.0

    def excess(p: float) -> float:
        return (1.0 - (1.0 - p) ** cap) / p - mean_len

    return float(brentq(excess, 1e-9, 1.0))


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


class _Catalog:
    """Shared latent structure of the synthetic world."""

    def __init__(self, cfg: GenConfig):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
        scale = cfg.latent_dim**-0.25
        self.app_factors = rng.normal(0.0, scale, size=(cfg.n_download_games, cfg.latent_dim))
        self.app_popularity = rng.normal(0.0, cfg.popularity_sigma, size=cfg.n_download_games)
        # paid game p is download app p
        self.game_factors = self.app_factors[: cfg.n_paid_games]
        self.game_popularity = self.app_popularity[: cfg.n_paid_games]
        self.game_log_price = rng.normal(0.0, cfg.game_price_sigma, size=cfg.n_paid_games)
        self.scale = scale


def _generate_user(cfg: GenConfig, cat: _Catalog, p_hist: float, uid: int) -> dict[str, Any]:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, uid)))
    tau = cfg.affinity_temperature
    u_vec = rng.normal(0.0, cat.scale, size=cfg.latent_dim)
    log_prop = rng.normal(0.0, cfg.user_spend_sigma)

    hist_len = int(min(MAX_HISTORY_LEN, rng.geometric(p_hist), cfg.n_download_games))
    app_probs = _softmax(tau * (cat.app_factors @ u_vec) + cat.app_popularity)
    history = rng.choice(cfg.n_download_games, size=hist_len, replace=False, p=app_probs)

    f180 = 0 if rng.random() < cfg.cold_user_rate else int(rng.poisson(cfg.payments_180_mean))
    t180 = 0.0
    if f180 > 0:
        past_games = rng.integers(0, cfg.n_paid_games, size=f180)
        noise = rng.normal(0.0, 1.0, size=f180)
        past = cfg.spend_median * np.exp(log_prop + cat.game_log_price[past_games] + cfg.tail_shape * noise)
        t180 = round(float(np.maximum(np.round(past, 2), 0.01).sum()), 2)

    n = int(rng.poisson(cfg.interactions_per_user))
    game_logits = tau * (cat.game_factors @ u_vec) + cat.game_popularity
    games = rng.choice(cfg.n_paid_games, size=n, p=_softmax(game_logits))
    if cfg.active_days is None:
        days = rng.integers(1, cfg.n_days + 1, size=n)
    else:
        arrival = int(rng.integers(1, cfg.n_days - cfg.active_days + 2))
        days = arrival + rng.integers(0, cfg.active_days, size=n)
    return {
        "profile": UserProfile(uid, tuple(int(h) for h in history), t180, f180),
        "games": games,
        "days": days,
        "logits": game_logits[games],
        "log_prop": np.full(n, log_prop),
        "pay_draw": rng.random(n),
        "noise": rng.normal(0.0, 1.0, size=n),
    }


def generate_synthetic(cfg: GenConfig, threads: int = 1) -> Dataset:
    """Seeded synthetic world with collaborative download structure and heavy-tailed spend.

    Every user draws from its own substream keyed by (seed, user_id), so the result
    does not depend on ``threads``.
    """
    logger.info(
        f"Generating synthetic dataset: users={cfg.n_users} paid_games={cfg.n_paid_games} "
        f"zero_rate={cfg.zero_rate} seed={cfg.seed}"
    )
    cat = _Catalog(cfg)
    p_hist = history_success_prob(cfg.history_mean_len)

    def work(uid: int):
        return _generate_user(cfg, cat, p_hist, uid)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(cfg.n_users)))
    else:
        parts = [work(uid) for uid in range(cfg.n_users)]

    def cat_field(name, dtype):
        arrays = [p[name] for p in parts]
        return np.concatenate(arrays).astype(dtype) if arrays else np.zeros(0, dtype=dtype)

    users = np.concatenate([np.full(len(p["games"]), uid, dtype=np.int64) for uid, p in enumerate(parts)])
    games = cat_field("games", np.int64)
    days = cat_field("days", np.int64)
    logits = cat_field("logits", np.float64)
    log_prop = cat_field("log_prop", np.float64)
    pay_draw = cat_field("pay_draw", np.float64)
    noise = cat_field("noise", np.float64)

    # pay probability tilted toward high-affinity pairs, marginal equal to 1 - zero_rate
    if cfg.zero_rate == 0.0:
        pay_prob = np.ones_like(logits)
    elif len(logits):
        std = logits.std()
        z = (logits - logits.mean()) / std if std > 0 else np.zeros_like(logits)
        w = np.exp(cfg.pay_affinity_weight * z)
        pay_prob = np.minimum(1.0, (1.0 - cfg.zero_rate) * w / w.mean())
    else:
        pay_prob = logits
    pays = pay_draw < pay_prob
    amount = cfg.spend_median * np.exp(log_prop + cat.game_log_price[games] + cfg.tail_shape * noise)
    spends = np.where(pays, np.maximum(np.round(amount, 2), 0.01), 0.0)

    ds = Dataset(
        users=users,
        games=games,
        days=days,
        spends=spends,
        profiles={p["profile"].user_id: p["profile"] for p in parts},
        paid_catalog_size=cfg.n_paid_games,
        download_catalog_size=cfg.n_download_games,
        rng_seed=cfg.seed,
    )
    logger.info(f"Generated {len(ds)} interactions, {int(pays.sum())} with spend > 0")
    return ds


def split_temporal(ds: Dataset, train_days: int) -> tuple[Dataset, Dataset]:
    n_days = ds.n_days
    if not (1 <= train_days < n_days):
        raise ConfigError(f"train_days must be in [1, {n_days}), got {train_days}")
    mask = ds.days <= train_days
    train, test = ds.take(np.flatnonzero(mask)), ds.take(np.flatnonzero(~mask))
    logger.info(f"Temporal split at day {train_days}: train={len(train)} test={len(test)}")
    return train, test


def build_game_stats(train: Dataset, include_zeros: bool = False) -> dict[int, GameSpendStats]:
    """Per-game count, mean and population std of historical spend."""
    if len(train) == 0:
        raise DataError("cannot build game statistics from an empty dataset")
    mask = np.ones(len(train), dtype=bool) if include_zeros else train.spends > 0
    games = train.games[mask]
    spends = train.spends[mask]
    n = train.paid_catalog_size
    counts = np.bincount(games, minlength=n)
    sums = np.bincount(games, weights=spends, minlength=n)
    means = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    sq_dev = np.bincount(games, weights=(spends - means[games]) ** 2, minlength=n)
    stds = np.sqrt(np.divide(sq_dev, counts, out=np.zeros(n), where=counts > 0))
    return {
        int(g): GameSpendStats(int(g), int(counts[g]), float(means[g]), float(stds[g]))
        for g in np.flatnonzero(counts)
    }


def describe_dataset(ds: Dataset) -> DatasetStats:
    nonzero = ds.spends[ds.spends > 0]
    lengths = np.array([len(p.download_history) for p in ds.profiles.values()], dtype=np.float64)
    have = len(nonzero) > 0

    def stat(fn):
        return float(fn(nonzero)) if have else None

    return DatasetStats(
        min_cost=stat(np.min),
        max_cost=stat(np.max),
        avg_cost=stat(np.mean),
        std_cost=stat(np.std),
        median_cost=stat(np.median),
        n_nonzero=int(len(nonzero)),
        n_zero=int(len(ds) - len(nonzero)),
        zero_fraction=float((len(ds) - len(nonzero)) / len(ds)) if len(ds) else 0.0,
        min_history_len=int(lengths.min()) if len(lengths) else 0,
        max_history_len=int(lengths.max()) if len(lengths) else 0,
        avg_history_len=float(lengths.mean()) if len(lengths) else 0.0,
        std_history_len=float(lengths.std()) if len(lengths) else 0.0,
        n_download_apps=ds.download_catalog_size,
        n_paid_games=ds.paid_catalog_size,
        n_users=len(ds.profiles),
        n_days=ds.n_days,
    )
