from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from typing import Any, ClassVar, Iterator, Sequence

import numpy as np

from ..exceptions import ConfigError
from ..features import FeatureBatch, FeatureEncoder
from ..tensor import (
    DenseCache,
    ParamStore,
    concat,
    concat_backward,
    dense_backward,
    dense_forward,
    embedding_lookup,
    init_dense,
    init_embedding,
    mean_pool,
    mean_pool_backward,
)
from ..train import mse_loss, mse_loss_grad


@dataclass
class BaseScorer(ABC):
    """A scorer maps a FeatureBatch to one prediction per row.

    Subclasses register their tensors in ``init_params`` and implement a forward
    pass returning ``(output, cache)`` and a backward pass that accumulates
    parameter gradients from ``d loss / d output``.
    """

    encoder: FeatureEncoder
    embed_dim: int = 8
    seed: int = 0
    params: ParamStore = field(init=False, repr=False)

    model_type: ClassVar[str] = ""
    uses_raw_targets: ClassVar[bool] = False
    """Trained on raw spends instead of standardized targets."""
    user_id_free: ClassVar[bool] = True

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        self.validate()
        self.params = ParamStore()
        self.init_params(np.random.default_rng(self.seed))

    def validate(self) -> None:
        pass

    @abstractmethod
    def init_params(self, rng: np.random.Generator) -> None:
        """Register every parameter tensor"""

    @abstractmethod
    def forward(self, batch: FeatureBatch) -> tuple[np.ndarray, Any]:
        """Return raw model output and the cache backward needs"""

    @abstractmethod
    def backward(self, doutput: np.ndarray, cache: Any) -> None:
        """Accumulate parameter gradients"""

    def predict(self, output: np.ndarray) -> np.ndarray:
        return output

    def loss(self, output: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
        return mse_loss(output, targets), mse_loss_grad(output, targets)

    def loss_and_backward(self, batch: FeatureBatch, targets: np.ndarray) -> float:
        output, cache = self.forward(batch)
        loss, doutput = self.loss(output, targets)
        self.backward(doutput, cache)
        return loss

    def score(self, batch: FeatureBatch, chunk_size: int = 16384) -> np.ndarray:
        """Predictions without touching gradients."""
        out = [
            self.predict(self.forward(batch.take(slice(i, i + chunk_size)))[0])
            for i in range(0, len(batch), chunk_size)
        ]
        return np.concatenate(out) if out else np.zeros(0)

    def activation_pattern(self, batch: FeatureBatch) -> np.ndarray:
        """Signs of every relu pre-activation in a forward pass over ``batch``."""
        _, cache = self.forward(batch)
        signs = [c.z.ravel() > 0.0 for c in _dense_caches(cache) if c.act == "relu"]
        return np.concatenate(signs) if signs else np.zeros(0, dtype=bool)

    def hyperparams(self) -> dict[str, Any]:
        skip = {"encoder", "params"}
        result = {}
        for f in fields(self):
            if f.name in skip:
                continue
            value = getattr(self, f.name)
            result[f.name] = list(value) if isinstance(value, tuple) else value
        return result


def _dense_caches(cache) -> Iterator[DenseCache]:
    if isinstance(cache, DenseCache):
        yield cache
    elif isinstance(cache, (list, tuple)):
        for part in cache:
            yield from _dense_caches(part)


def add_input_block(params: ParamStore, rng: np.random.Generator, encoder: FeatureEncoder, k: int) -> int:
    """Register the game and history tables; returns the width of x0."""
    params.add("game_emb", init_embedding(rng, encoder.paid_catalog_size, k))
    pad = encoder.pad_id
    params.add(
        "hist_emb",
        init_embedding(rng, encoder.download_catalog_size + 1, k, pad_row=pad),
        frozen_rows=(pad,),
    )
    return 2 * k + encoder.n_dense


def input_block_forward(params: ParamStore, batch: FeatureBatch):
    """x0 = [game embedding, mean-pooled history embedding, dense features]"""
    game_vecs = embedding_lookup(params["game_emb"].values, batch.games)
    hist_vecs = embedding_lookup(params["hist_emb"].values, batch.history)
    pooled, pool_cache = mean_pool(hist_vecs, batch.history_mask)
    x0, sizes = concat([game_vecs, pooled, batch.dense])
    return x0, (batch, pool_cache, sizes)


def input_block_backward(params: ParamStore, dx0: np.ndarray, cache) -> None:
    batch, pool_cache, sizes = cache
    dgame, dpooled, _ = concat_backward(dx0, sizes)
    params["game_emb"].accumulate_rows(batch.games, dgame)
    params["hist_emb"].accumulate_rows(batch.history, mean_pool_backward(dpooled, pool_cache))


def add_mlp(params: ParamStore, rng: np.random.Generator, prefix: str, n_in: int, sizes: Sequence[int]) -> None:
    for i, n_out in enumerate(sizes):
        W, b = init_dense(rng, n_out, n_in)
        params.add(f"{prefix}_W{i}", W)
        params.add(f"{prefix}_b{i}", b)
        n_in = n_out


def mlp_forward(params: ParamStore, prefix: str, x: np.ndarray, n_layers: int):
    """relu on hidden layers, identity on the last"""
    caches = []
    for i in range(n_layers):
        act = "identity" if i == n_layers - 1 else "relu"
        x, cache = dense_forward(x, params[f"{prefix}_W{i}"].values, params[f"{prefix}_b{i}"].values, act)
        caches.append(cache)
    return x, caches


def mlp_backward(params: ParamStore, prefix: str, dy: np.ndarray, caches) -> np.ndarray:
    for i in reversed(range(len(caches))):
        dy, dW, db = dense_backward(dy, caches[i])
        params[f"{prefix}_W{i}"].accumulate(dW)
        params[f"{prefix}_b{i}"].accumulate(db)
    return dy


def check_head_sizes(sizes: Sequence[int], out_dim: int = 1) -> None:
    if not sizes or sizes[-1] != out_dim or any(s < 1 for s in sizes):
        raise ConfigError(f"head sizes must be positive and end in {out_dim}, got {list(sizes)}")
