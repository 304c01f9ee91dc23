from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, final

import numpy as np

from ..exceptions import ConfigError
from ..features import FeatureBatch
from ..tensor import ParamStore, cross_layer_backward, cross_layer_forward, init_dense
from .base import (
    BaseScorer,
    add_input_block,
    add_mlp,
    check_head_sizes,
    input_block_backward,
    input_block_forward,
    mlp_backward,
    mlp_forward,
)


def add_cross_network(params: ParamStore, rng: np.random.Generator, dim: int, n_layers: int, prefix: str = "cross") -> None:
    for i in range(n_layers):
        W, b = init_dense(rng, dim, dim)
        params.add(f"{prefix}_W{i}", W)
        params.add(f"{prefix}_b{i}", b)


def cross_network(x0: np.ndarray, params: ParamStore, n_layers: int, prefix: str = "cross"):
    """x_{l+1} = x0 * (W_l x_l + b_l) + x_l, applied ``n_layers`` times."""
    x = x0
    caches = []
    for i in range(n_layers):
        x, cache = cross_layer_forward(x0, x, params[f"{prefix}_W{i}"].values, params[f"{prefix}_b{i}"].values)
        caches.append(cache)
    return x, caches


def cross_network_backward(dy: np.ndarray, caches, params: ParamStore, prefix: str = "cross") -> np.ndarray:
    """Accumulates layer gradients and returns d loss / d x0."""
    dx0_total = np.zeros_like(dy)
    dx = dy
    for i in reversed(range(len(caches))):
        dx0, dx, dW, db = cross_layer_backward(dx, caches[i])
        dx0_total += dx0
        params[f"{prefix}_W{i}"].accumulate(dW)
        params[f"{prefix}_b{i}"].accumulate(db)
    return dx0_total + dx


@final
@dataclass
class CrossNetScorer(BaseScorer):
    """User-ID-free cross network over [game emb, pooled history emb, dense] with an MLP head."""

    cross_layers: int = 2
    head_mlp_sizes: Sequence[int] = field(default_factory=lambda: [16, 8, 1])

    model_type = "crossnet"

    def validate(self) -> None:
        if self.cross_layers < 0:
            raise ConfigError("cross_layers must be >= 0")
        check_head_sizes(self.head_mlp_sizes)

    def init_params(self, rng: np.random.Generator) -> None:
        d0 = add_input_block(self.params, rng, self.encoder, self.embed_dim)
        add_cross_network(self.params, rng, d0, self.cross_layers)
        add_mlp(self.params, rng, "head", d0, self.head_mlp_sizes)

    def forward(self, batch: FeatureBatch):
        x0, in_cache = input_block_forward(self.params, batch)
        v_fi, cross_caches = cross_network(x0, self.params, self.cross_layers)
        out, head_caches = mlp_forward(self.params, "head", v_fi, len(self.head_mlp_sizes))
        return out[:, 0], (in_cache, cross_caches, head_caches)

    def backward(self, doutput: np.ndarray, cache) -> None:
        in_cache, cross_caches, head_caches = cache
        dv = mlp_backward(self.params, "head", doutput[:, None], head_caches)
        dx0 = cross_network_backward(dv, cross_caches, self.params)
        input_block_backward(self.params, dx0, in_cache)
