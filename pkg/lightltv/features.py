from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .base import Dataset
from .exceptions import DataError
from .types import MAX_HISTORY_LEN

N_DENSE = 3


def _raw_dense(t180: np.ndarray, f180: np.ndarray, history_len: np.ndarray) -> np.ndarray:
    if len(t180) == 0:
        return np.zeros((0, N_DENSE))
    return np.column_stack(
        [
            np.log1p(t180),
            np.log1p(f180.astype(np.float64)),
            history_len / float(MAX_HISTORY_LEN),
        ]
    )


@dataclass(frozen=True)
class FeatureBatch:
    """Model inputs for a batch of (user, game) rows.

    ``history`` is right-padded with the encoder's pad id; ``dense`` holds the
    z-scored log1p(t180), log1p(f180) and history length / 10.
    """

    users: np.ndarray
    games: np.ndarray
    history: np.ndarray
    history_len: np.ndarray
    dense: np.ndarray

    def __len__(self) -> int:
        return len(self.games)

    def take(self, rows: np.ndarray | slice) -> "FeatureBatch":
        return FeatureBatch(
            self.users[rows],
            self.games[rows],
            self.history[rows],
            self.history_len[rows],
            self.dense[rows],
        )

    def with_candidates(self, candidates: np.ndarray) -> "FeatureBatch":
        """Repeat each row once per candidate game; ``candidates`` is (rows, slate)."""
        slate = candidates.shape[1]
        rows = np.repeat(np.arange(len(self)), slate)
        base = self.take(rows)
        return FeatureBatch(base.users, candidates.reshape(-1), base.history, base.history_len, base.dense)

    @property
    def history_mask(self) -> np.ndarray:
        return (np.arange(self.history.shape[1])[None, :] < self.history_len[:, None]).astype(np.float64)


@dataclass
class FeatureEncoder:
    """Turns Dataset rows into FeatureBatch arrays.

    The user vocabulary is only read by id-based baselines; users outside it map
    to the reserved last row.
    """

    paid_catalog_size: int
    download_catalog_size: int
    user_vocab: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    history_len: int = MAX_HISTORY_LEN
    dense_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_DENSE))
    dense_std: np.ndarray = field(default_factory=lambda: np.ones(N_DENSE))
    """Training-set moments used to z-score the dense side features."""

    def __post_init__(self):
        self.user_vocab = np.unique(np.asarray(self.user_vocab, dtype=np.int64))
        self.dense_mean = np.asarray(self.dense_mean, dtype=np.float64)
        self.dense_std = np.asarray(self.dense_std, dtype=np.float64)
        self.dense_std = np.where(self.dense_std > 0, self.dense_std, 1.0)

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "FeatureEncoder":
        table = ds.profile_table
        raw = _raw_dense(table.t180, table.f180, table.history_len)
        return cls(
            ds.paid_catalog_size,
            ds.download_catalog_size,
            np.unique(ds.users),
            dense_mean=raw.mean(axis=0) if len(raw) else np.zeros(N_DENSE),
            dense_std=raw.std(axis=0) if len(raw) else np.ones(N_DENSE),
        )

    @property
    def n_users(self) -> int:
        return len(self.user_vocab) + 1

    @property
    def unknown_user(self) -> int:
        return len(self.user_vocab)

    @property
    def pad_id(self) -> int:
        return self.download_catalog_size

    @property
    def n_dense(self) -> int:
        return N_DENSE

    def encode_users(self, user_ids: np.ndarray) -> np.ndarray:
        if len(self.user_vocab) == 0:
            return np.full(len(user_ids), self.unknown_user, dtype=np.int64)
        pos = np.searchsorted(self.user_vocab, user_ids)
        pos_clipped = np.minimum(pos, len(self.user_vocab) - 1)
        known = self.user_vocab[pos_clipped] == user_ids
        return np.where(known, pos_clipped, self.unknown_user).astype(np.int64)

    def _check_catalogs(self, users, games, history, rows) -> None:
        """Ids the model has no embedding for are a data error on the offending row."""

        def dataset_row(i: int) -> int:
            return (int(rows[i]) if rows is not None else i) + 1

        bad = np.flatnonzero(games >= self.paid_catalog_size)
        if bad.size:
            i = int(bad[0])
            raise DataError(
                f"game {int(games[i])} outside the model's paid catalog of size {self.paid_catalog_size}",
                row=dataset_row(i),
                column="game",
            )
        bad = np.flatnonzero((history >= self.download_catalog_size).any(axis=1))
        if bad.size:
            i = int(bad[0])
            raise DataError(
                f"user {int(users[i])}: history id {int(history[i].max())} outside the model's "
                f"download catalog of size {self.download_catalog_size}",
                row=dataset_row(i),
                column="history",
            )

    def encode(self, ds: Dataset, rows: Optional[np.ndarray] = None) -> FeatureBatch:
        users = ds.users if rows is None else ds.users[rows]
        games = ds.games if rows is None else ds.games[rows]
        table = ds.profile_table
        prow = table.rows_for(users)
        history = table.history[prow, : self.history_len]
        self._check_catalogs(users, games, history, rows)
        history = np.where(history < 0, self.pad_id, history)
        hlen = np.minimum(table.history_len[prow], self.history_len)
        raw = _raw_dense(table.t180[prow], table.f180[prow], hlen)
        dense = (raw - self.dense_mean) / self.dense_std
        return FeatureBatch(self.encode_users(users), games.astype(np.int64), history, hlen, dense)

    def to_dict(self) -> dict[str, Any]:
        return {
            "paid_catalog_size": self.paid_catalog_size,
            "download_catalog_size": self.download_catalog_size,
            "history_len": self.history_len,
            "user_vocab": self.user_vocab.tolist(),
            "dense_mean": self.dense_mean.tolist(),
            "dense_std": self.dense_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FeatureEncoder":
        return cls(
            paid_catalog_size=int(data["paid_catalog_size"]),
            download_catalog_size=int(data["download_catalog_size"]),
            user_vocab=np.asarray(data.get("user_vocab", []), dtype=np.int64),
            history_len=int(data.get("history_len", MAX_HISTORY_LEN)),
            dense_mean=np.asarray(data.get("dense_mean", np.zeros(N_DENSE)), dtype=np.float64),
            dense_std=np.asarray(data.get("dense_std", np.ones(N_DENSE)), dtype=np.float64),
        )
