from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator, Mapping, Optional

import numpy as np
from dotenv import load_dotenv

from .exceptions import ConfigError, DataError
from .types import MAX_HISTORY_LEN

load_dotenv()


class Scheme(str, Enum):
    """Label standardization schemes"""

    OV = "ov"
    LOG = "log"
    US = "us"
    GS = "gs"
    BS = "bs"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ConfigError(f"Unknown scheme '{value}'. Valid schemes are: {valid}")


@dataclass(frozen=True)
class Interaction:
    """One (user, game, day, spend) observation."""

    user_id: int
    game_id: int
    day: int
    spend: float


@dataclass(frozen=True)
class UserProfile:
    """Download history plus 180-day payment aggregates of one user."""

    user_id: int
    download_history: tuple[int, ...]
    """Downloaded-game ids in chronological order, 1 to 10 entries."""
    total_spend_180: float
    payment_count_180: int

    def __post_init__(self):
        n = len(self.download_history)
        if n < 1:
            raise DataError(
                f"user {self.user_id}: history must contain at least one game",
                column="history",
            )
        if n > MAX_HISTORY_LEN:
            raise DataError(
                f"user {self.user_id}: history length > {MAX_HISTORY_LEN}",
                column="history",
            )
        if self.total_spend_180 < 0 or self.payment_count_180 < 0:
            raise DataError(
                f"user {self.user_id}: negative 180-day aggregates", column="t180"
            )
        if self.payment_count_180 == 0 and self.total_spend_180 != 0:
            raise DataError(
                f"user {self.user_id}: f180 = 0 requires t180 = 0", column="t180"
            )


@dataclass(frozen=True)
class GameSpendStats:
    """Historical spend statistics of one paid game."""

    game_id: int
    count: int
    mean: float
    std: float
    """Population (divide-by-N) standard deviation."""

    @property
    def degenerate(self) -> bool:
        return self.count == 1 or self.std == 0.0


@dataclass(frozen=True)
class ProfileTable:
    """Columnar view of the profiles of a dataset, sorted by user id."""

    user_ids: np.ndarray
    history: np.ndarray
    """(n_users, MAX_HISTORY_LEN) history ids, right-padded with -1."""
    history_len: np.ndarray
    t180: np.ndarray
    f180: np.ndarray

    def rows_for(self, user_ids: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.user_ids, user_ids)
        pos = np.clip(pos, 0, max(len(self.user_ids) - 1, 0))
        if len(self.user_ids) == 0 or not np.array_equal(self.user_ids[pos], user_ids):
            missing = np.setdiff1d(user_ids, self.user_ids)
            raise DataError(f"no profile for users {missing[:5].tolist()}")
        return pos


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable multiset of interactions plus the profiles of their users.

    Interactions are stored column-wise; ``interactions`` materializes them as
    Interaction objects when row access is needed.
    """

    users: np.ndarray
    games: np.ndarray
    days: np.ndarray
    spends: np.ndarray
    profiles: Mapping[int, UserProfile]
    paid_catalog_size: int
    download_catalog_size: int
    rng_seed: int = 0

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        games = np.asarray(self.games, dtype=np.int64)
        days = np.asarray(self.days, dtype=np.int64)
        spends = np.asarray(self.spends, dtype=np.float64)
        if not (len(users) == len(games) == len(days) == len(spends)):
            raise DataError("interaction columns have different lengths")
        for name, arr in (("users", users), ("games", games), ("days", days), ("spends", spends)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        if self.paid_catalog_size < 1 or self.download_catalog_size < 1:
            raise DataError("catalog sizes must be >= 1")

        def _first(mask: np.ndarray) -> int:
            return int(np.flatnonzero(mask)[0]) + 1

        bad = ~np.isfinite(spends) | (spends < 0)
        if bad.any():
            row = _first(bad)
            raise DataError(f"spend must be finite and >= 0, got {spends[row - 1]}", row=row, column="spend")
        bad = days < 1
        if bad.any():
            raise DataError("day must be >= 1", row=_first(bad), column="day")
        bad = (games < 0) | (games >= self.paid_catalog_size)
        if bad.any():
            row = _first(bad)
            raise DataError(
                f"game {games[row - 1]} outside paid catalog of size {self.paid_catalog_size}",
                row=row,
                column="game",
            )
        if len(users):
            known = np.fromiter(self.profiles.keys(), dtype=np.int64, count=len(self.profiles))
            bad = ~np.isin(users, known)
            if bad.any():
                row = _first(bad)
                raise DataError(f"user {users[row - 1]} has no profile", row=row, column="user")
        for profile in self.profiles.values():
            if max(profile.download_history) >= self.download_catalog_size or min(profile.download_history) < 0:
                raise DataError(
                    f"user {profile.user_id}: history id outside download catalog of size {self.download_catalog_size}",
                    column="history",
                )

    def __len__(self) -> int:
        return len(self.spends)

    def __iter__(self) -> Iterator[Interaction]:
        for u, g, d, s in zip(self.users, self.games, self.days, self.spends):
            yield Interaction(int(u), int(g), int(d), float(s))

    @property
    def interactions(self) -> list[Interaction]:
        return list(self)

    @property
    def n_days(self) -> int:
        return int(self.days.max()) if len(self.days) else 0

    @cached_property
    def profile_table(self) -> ProfileTable:
        user_ids = np.array(sorted(self.profiles), dtype=np.int64)
        n = len(user_ids)
        history = np.full((n, MAX_HISTORY_LEN), -1, dtype=np.int64)
        history_len = np.zeros(n, dtype=np.int64)
        t180 = np.zeros(n, dtype=np.float64)
        f180 = np.zeros(n, dtype=np.int64)
        for i, uid in enumerate(user_ids):
            p = self.profiles[int(uid)]
            h = p.download_history
            history[i, : len(h)] = h
            history_len[i] = len(h)
            t180[i] = p.total_spend_180
            f180[i] = p.payment_count_180
        return ProfileTable(user_ids, history, history_len, t180, f180)

    def take(self, rows: np.ndarray | slice) -> "Dataset":
        """Subset of interactions sharing the same profiles and catalogs."""
        return Dataset(
            users=self.users[rows],
            games=self.games[rows],
            days=self.days[rows],
            spends=self.spends[rows],
            profiles=self.profiles,
            paid_catalog_size=self.paid_catalog_size,
            download_catalog_size=self.download_catalog_size,
            rng_seed=self.rng_seed,
        )


@dataclass
class GenConfig:
    """Configuration of the synthetic spend generator."""

    n_users: int = 5000
    n_paid_games: int = 432
    n_download_games: int = 7507
    n_days: int = 31
    zero_rate: float = 0.979
    """Marginal probability that an interaction has zero spend."""
    spend_median: float = 11.0
    """Median of non-zero spends."""
    tail_shape: float = 0.4
    """Lognormal sigma of the per-interaction spend noise."""
    user_spend_sigma: float = 2.6
    """Lognormal sigma of the per-user spend-propensity factor."""
    game_price_sigma: float = 0.9
    """Lognormal sigma of the per-game price-level factor."""
    latent_dim: int = 8
    interactions_per_user: float = 20.0
    history_mean_len: float = 3.78
    payments_180_mean: float = 10.0
    cold_user_rate: float = 0.02
    affinity_temperature: float = 2.0
    popularity_sigma: float = 1.0
    pay_affinity_weight: float = 1.0
    active_days: Optional[int] = None
    """Days a user stays active from a uniformly drawn arrival day; None spans the whole window."""
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.zero_rate <= 1.0) or math.isnan(self.zero_rate):
            raise ConfigError(f"zero_rate must be in [0, 1], got {self.zero_rate}")
        for name in ("n_users", "n_paid_games", "n_download_games", "n_days", "latent_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_download_games < self.n_paid_games:
            raise ConfigError("n_download_games must be >= n_paid_games")
        if self.spend_median <= 0:
            raise ConfigError("spend_median must be > 0")
        for name in ("tail_shape", "user_spend_sigma", "game_price_sigma", "popularity_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (1.0 <= self.history_mean_len < MAX_HISTORY_LEN):
            raise ConfigError(f"history_mean_len must be in [1, {MAX_HISTORY_LEN})")
        if self.interactions_per_user <= 0 or self.payments_180_mean < 0:
            raise ConfigError("interactions_per_user must be > 0 and payments_180_mean >= 0")
        if not (0.0 <= self.cold_user_rate <= 1.0):
            raise ConfigError("cold_user_rate must be in [0, 1]")
        if self.active_days is not None and not (1 <= self.active_days <= self.n_days):
            raise ConfigError(f"active_days must be in [1, {self.n_days}], got {self.active_days}")


@dataclass
class TrainConfig:
    """Configuration of one training run."""

    scheme: Scheme = Scheme.BS
    batch_size: int = int(os.getenv("BATCH_SIZE", 1024))
    epochs: int = int(os.getenv("EPOCHS", 20))
    lr: float = 1e-5
    seed: int = 0
    eval_every: int = 0
    """Steps between evaluation points; 0 evaluates once per epoch."""
    streaming: bool = False
    patience: int = 3
    """Evaluation points without HR@10 improvement before stopping; 0 disables."""
    zero_ratio: Optional[float] = 4.0
    """Zero:non-zero rows kept per epoch; None keeps every row."""
    shuffle: bool = True
    eval_cases: Optional[int] = 2000
    """Ranking cases scored at each evaluation point; None scores all."""
    n_negatives: int = 100
    threads: int = 1

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme)
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.eval_every < 0 or self.patience < 0:
            raise ConfigError("eval_every and patience must be >= 0")
        if self.zero_ratio is not None and self.zero_ratio < 0:
            raise ConfigError("zero_ratio must be >= 0 or None")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


@dataclass
class ExperimentConfig:
    """Everything one pipeline run needs; resolved from file, env and flags."""

    gen: GenConfig = field(default_factory=GenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: Optional[str] = None
    """Existing dataset directory; when None the generator config is used."""
    model_type: str = "collab"
    models: list[str] = field(default_factory=lambda: ["mf", "fm", "crossnet", "collab"])
    ks: list[int] = field(default_factory=lambda: [1, 5, 10])
    n_runs: int = 3
    seeds: list[int] = field(default_factory=list)
    train_days: int = 30
    val_days: int = 1
    stability_mode: str = "retrain"
    exclude_interacted: bool = False
    include_zeros: bool = False
    """Include zero spends in the per-game statistics."""
    g_weight: float = 0.5
    u_weight: float = 0.5
    model_hyperparams: dict = field(default_factory=dict)
    output_dir: str = "./lightltv_out"
    threads: int = 1

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError(f"ks must be positive integers, got {self.ks}")
        if self.stability_mode not in ("retrain", "daily"):
            raise ConfigError(f"stability_mode must be 'retrain' or 'daily', got {self.stability_mode}")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.val_days < 0 or self.train_days < 1:
            raise ConfigError("train_days must be >= 1 and val_days >= 0")
        if not self.seeds:
            self.seeds = [self.train.seed + i for i in range(self.n_runs)]
