from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, final

import numpy as np

from ..features import FeatureBatch
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


@dataclass
class DenseScorer(BaseScorer):
    """Feed-forward regressor on x0 = [game emb, pooled history emb, dense]."""

    head_mlp_sizes: Sequence[int] = field(default_factory=lambda: [16, 8, 1])

    def validate(self) -> None:
        check_head_sizes(self.head_mlp_sizes)

    def init_params(self, rng: np.random.Generator) -> None:
        d0 = add_input_block(self.params, rng, self.encoder, self.embed_dim)
        add_mlp(self.params, rng, "head", d0, self.head_mlp_sizes)

    def forward(self, batch: FeatureBatch):
        x0, in_cache = input_block_forward(self.params, batch)
        out, head_caches = mlp_forward(self.params, "head", x0, len(self.head_mlp_sizes))
        return out[:, 0], (in_cache, head_caches)

    def backward(self, doutput: np.ndarray, cache) -> None:
        in_cache, head_caches = cache
        dx0 = mlp_backward(self.params, "head", doutput[:, None], head_caches)
        input_block_backward(self.params, dx0, in_cache)


@final
@dataclass
class LinearScorer(DenseScorer):
    head_mlp_sizes: Sequence[int] = field(default_factory=lambda: [1])

    model_type = "linear"


@final
@dataclass
class MLPScorer(DenseScorer):
    model_type = "mlp"
