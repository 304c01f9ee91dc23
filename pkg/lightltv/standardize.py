from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

import numpy as np

from .base import Dataset, GameSpendStats, Scheme
from .data import build_game_stats, interaction_rows
from .exceptions import ColdEntityError, DataError
from .types import NormStats
from .utils import logger, write_json, write_jsonl


class GameColumns(NamedTuple):
    """Per-row game statistics; ``cold`` marks games without any."""

    mean: np.ndarray
    std: np.ndarray
    cold: np.ndarray


def _ratio(num, den):
    """num / den with 0 where den is 0; floats in, float out."""
    num, den = np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64)
    shape = np.broadcast(num, den).shape
    out = np.divide(num, den, out=np.zeros(shape), where=den != 0)
    return out if out.ndim else float(out)


def game_sided(s_up, stats: Optional[GameSpendStats | GameColumns]):
    """z-score of a spend against the game's historical spends; 0 for a degenerate game."""
    if stats is None:
        raise ColdEntityError("no spend statistics for game", column="game")
    return _ratio(np.asarray(s_up) - stats.mean, stats.std)


def user_divisor(t180, f180, global_mean: float):
    """Average payment of the user, or the global mean non-zero spend for cold users."""
    t180, f180 = np.asarray(t180, dtype=np.float64), np.asarray(f180)
    warm = (f180 > 0) & (t180 > 0)
    return np.where(warm, _ratio(t180, f180), global_mean)


def user_sided(s_up, t180, f180, global_mean: float):
    """Spend relative to the user's average payment."""
    return _ratio(s_up, user_divisor(t180, f180, global_mean))


def _z(value, mean: float, std: float):
    if std == 0.0:
        return np.zeros_like(value) if isinstance(value, np.ndarray) else 0.0
    return (value - mean) / std


def combine_both_sided(g, u, norm: NormStats, cold: Optional[np.ndarray] = None):
    """Weighted sum of the z-normalized game-sided and user-sided values.

    A cold game (``g is None``, or ``cold`` set for that row) contributes
    nothing and the user-sided value takes the full weight.
    """
    u_hat = _z(u, norm.u_mean, norm.u_std)
    if g is None:
        return u_hat if isinstance(u_hat, np.ndarray) else float(u_hat)
    both = norm.g_weight * _z(g, norm.g_mean, norm.g_std) + norm.u_weight * u_hat
    if cold is not None:
        return np.where(cold, u_hat, both)
    return both if isinstance(both, np.ndarray) else float(both)


def label_dispersion(values: np.ndarray) -> float:
    """std / mean(|values|); the CoV for non-negative labels."""
    values = np.asarray(values, dtype=np.float64)
    scale = np.abs(values).mean() if len(values) else 0.0
    if scale == 0.0:
        return 0.0
    return float(values.std() / scale)


@dataclass
class LabelStandardizer:
    """Fitted once on a training split, then applied unchanged to any other split."""

    scheme: Scheme
    game_stats: dict[int, GameSpendStats]
    norm: NormStats

    @classmethod
    def fit(
        cls,
        train: Dataset,
        scheme: Scheme | str,
        include_zeros: bool = False,
        g_weight: float = 0.5,
        u_weight: float = 0.5,
    ) -> "LabelStandardizer":
        scheme = Scheme.parse(scheme)
        if len(train) == 0:
            raise DataError("cannot fit label standardization on an empty training set")
        game_stats = build_game_stats(train, include_zeros=include_zeros)
        nonzero = train.spends[train.spends > 0]
        global_mean = float(nonzero.mean()) if len(nonzero) else 0.0
        partial = cls(scheme, game_stats, NormStats(scheme=scheme.value, global_mean_nonzero=global_mean))
        g, cold, u = partial._components(train)
        g_pop = g[~cold]
        norm = NormStats(
            scheme=scheme.value,
            g_mean=float(g_pop.mean()) if len(g_pop) else 0.0,
            g_std=float(g_pop.std()) if len(g_pop) else 0.0,
            u_mean=float(u.mean()),
            u_std=float(u.std()),
            global_mean_nonzero=global_mean,
            g_weight=g_weight,
            u_weight=u_weight,
            include_zeros=include_zeros,
        )
        logger.info(
            f"Fitted {scheme.value} standardizer on {len(train)} rows, "
            f"{len(game_stats)} games with stats"
        )
        return cls(scheme, game_stats, norm)

    def _game_arrays(self, games: np.ndarray) -> GameColumns:
        n = max(int(games.max()) + 1 if len(games) else 0, max(self.game_stats, default=-1) + 1)
        means = np.zeros(n)
        stds = np.zeros(n)
        known = np.zeros(n, dtype=bool)
        for gid, st in self.game_stats.items():
            means[gid], stds[gid], known[gid] = st.mean, st.std, True
        return GameColumns(means[games], stds[games], ~known[games])

    def _user_divisor(self, ds: Dataset) -> np.ndarray:
        table = ds.profile_table
        rows = table.rows_for(ds.users)
        return user_divisor(table.t180[rows], table.f180[rows], self.norm.global_mean_nonzero)

    def _components(self, ds: Dataset):
        """Raw game-sided values, cold-game mask and raw user-sided values."""
        columns = self._game_arrays(ds.games)
        table = ds.profile_table
        rows = table.rows_for(ds.users)
        g = game_sided(ds.spends, columns)
        u = user_sided(ds.spends, table.t180[rows], table.f180[rows], self.norm.global_mean_nonzero)
        return g, columns.cold, u

    def transform(self, ds: Dataset) -> np.ndarray:
        s = ds.spends
        if self.scheme is Scheme.OV:
            targets = s.copy()
        elif self.scheme is Scheme.LOG:
            targets = np.log1p(s)
        else:
            g, cold, u = self._components(ds)
            if self.scheme is Scheme.US:
                targets = u
            elif self.scheme is Scheme.GS:
                targets = np.where(cold, 0.0, g)
            else:
                targets = combine_both_sided(g, u, self.norm, cold)
        targets = np.where(s > 0, targets, 0.0)
        if not np.all(np.isfinite(targets)):
            raise DataError(f"non-finite {self.scheme.value} target produced")
        return targets

    def inverse(self, targets: np.ndarray, ds: Dataset) -> np.ndarray:
        """Map target-space predictions back to spend, clipped at 0.

        Each scheme is affine in the spend for a fixed (user, game), so the map
        is target = alpha * spend + beta solved for spend. Where alpha vanishes
        the best constant guess is used instead.
        """
        t = np.asarray(targets, dtype=np.float64)
        if self.scheme is Scheme.OV:
            return np.maximum(t, 0.0)
        if self.scheme is Scheme.LOG:
            return np.maximum(np.expm1(t), 0.0)

        n = self.norm
        means, stds, cold = self._game_arrays(ds.games)
        divisor = self._user_divisor(ds)
        inv_div = np.divide(1.0, divisor, out=np.zeros(len(t)), where=divisor > 0)
        inv_std = np.divide(1.0, stds, out=np.zeros(len(t)), where=stds > 0)
        fallback = np.where(cold | (stds == 0), np.where(cold, n.global_mean_nonzero, means), means)

        if self.scheme is Scheme.US:
            alpha, beta = inv_div, np.zeros(len(t))
        elif self.scheme is Scheme.GS:
            alpha, beta = inv_std, -means * inv_std
        else:
            gz = 1.0 / n.g_std if n.g_std > 0 else 0.0
            uz = 1.0 / n.u_std if n.u_std > 0 else 0.0
            g_beta = -n.g_weight * gz * (means * inv_std + n.g_mean)
            u_alpha = uz * inv_div
            u_beta = -uz * n.u_mean
            alpha = np.where(cold, u_alpha, n.g_weight * gz * inv_std + n.u_weight * u_alpha)
            beta = np.where(cold, u_beta, g_beta + n.u_weight * u_beta)
            fallback = np.where(cold, n.global_mean_nonzero, means)

        spend = np.divide(t - beta, alpha, out=fallback.astype(np.float64), where=alpha != 0)
        return np.maximum(spend, 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "norm": self.norm.model_dump(),
            "game_stats": [
                [st.game_id, st.count, st.mean, st.std]
                for st in sorted(self.game_stats.values(), key=lambda x: x.game_id)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LabelStandardizer":
        norm = NormStats.model_validate(data["norm"])
        stats = {int(g): GameSpendStats(int(g), int(c), float(m), float(s)) for g, c, m, s in data["game_stats"]}
        return cls(Scheme.parse(norm.scheme), stats, norm)


@dataclass
class LabeledDataset:
    dataset: Dataset
    targets: np.ndarray
    standardizer: LabelStandardizer
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def scheme(self) -> Scheme:
        return self.standardizer.scheme

    def __len__(self) -> int:
        return len(self.dataset)


def standardize_dataset(
    train: Dataset,
    scheme: Scheme | str,
    include_zeros: bool = False,
    g_weight: float = 0.5,
    u_weight: float = 0.5,
) -> LabeledDataset:
    standardizer = LabelStandardizer.fit(train, scheme, include_zeros, g_weight, u_weight)
    targets = standardizer.transform(train)
    nonzero = train.spends > 0
    logger.info(
        f"Standardized {len(train)} rows with {standardizer.scheme.value}: "
        f"dispersion raw={label_dispersion(train.spends[nonzero]):.4f} "
        f"standardized={label_dispersion(targets[nonzero]):.4f}"
    )
    return LabeledDataset(train, targets, standardizer)


def write_labeled(labeled: LabeledDataset, out_dir: str, file_name: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_jsonl(interaction_rows(labeled.dataset, labeled.targets), os.path.join(out_dir, file_name))


def write_norm_stats(standardizer: LabelStandardizer, path: str) -> None:
    write_json(standardizer.norm.model_dump(), path)
