from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, final

import numpy as np

from ..exceptions import ConfigError
from ..features import FeatureBatch
from ..tensor import (
    ParamStore,
    concat,
    concat_backward,
    elementwise_product,
    elementwise_product_backward,
    embedding_lookup,
)
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
from .crossnet import add_cross_network, cross_network, cross_network_backward


def user_pref(history: np.ndarray, params: ParamStore, n_layers: int):
    """Embed the padded history, concatenate in order and run the preference MLP.

    Pad slots read the frozen all-zero row of ``hist_emb``.
    """
    hist_vecs = embedding_lookup(params["hist_emb"].values, history)
    flat = hist_vecs.reshape(len(history), -1)
    v_u, caches = mlp_forward(params, "pref", flat, n_layers)
    return v_u, (history, hist_vecs.shape, caches)


def user_pref_backward(dv_u: np.ndarray, cache, params: ParamStore) -> None:
    history, shape, caches = cache
    dflat = mlp_backward(params, "pref", dv_u, caches)
    params["hist_emb"].accumulate_rows(history, dflat.reshape(shape))


@final
@dataclass
class CollabScorer(BaseScorer):
    """Collaborative-enhanced spend model.

    The user is represented only by the preference vector distilled from the
    download history, so scores never depend on user ids:

        v_up = pref_mlp(history) * game_emb[p]
        v    = [v_up, cross_network(x0)]
        s    = head_mlp(v)
    """

    pref_mlp_sizes: Sequence[int] = field(default_factory=lambda: [8, 16, 32, 8])
    cross_layers: int = 2
    head_mlp_sizes: Sequence[int] = field(default_factory=lambda: [16, 8, 1])

    model_type = "collab"

    def validate(self) -> None:
        if not self.pref_mlp_sizes or self.pref_mlp_sizes[-1] != self.embed_dim:
            raise ConfigError(
                f"last preference layer must equal embed_dim {self.embed_dim}, got {list(self.pref_mlp_sizes)}"
            )
        if self.cross_layers < 0:
            raise ConfigError("cross_layers must be >= 0")
        check_head_sizes(self.head_mlp_sizes)

    def init_params(self, rng: np.random.Generator) -> None:
        k = self.embed_dim
        d0 = add_input_block(self.params, rng, self.encoder, k)
        add_mlp(self.params, rng, "pref", self.encoder.history_len * k, self.pref_mlp_sizes)
        add_cross_network(self.params, rng, d0, self.cross_layers)
        add_mlp(self.params, rng, "head", k + d0, self.head_mlp_sizes)

    def forward(self, batch: FeatureBatch):
        p = self.params
        v_u, pref_cache = user_pref(batch.history, p, len(self.pref_mlp_sizes))
        v_p = embedding_lookup(p["game_emb"].values, batch.games)
        v_up, prod_cache = elementwise_product(v_u, v_p)

        x0, in_cache = input_block_forward(p, batch)
        v_fi, cross_caches = cross_network(x0, p, self.cross_layers)

        v, sizes = concat([v_up, v_fi])
        out, head_caches = mlp_forward(p, "head", v, len(self.head_mlp_sizes))
        return out[:, 0], (batch, pref_cache, prod_cache, in_cache, cross_caches, sizes, head_caches)

    def backward(self, doutput: np.ndarray, cache) -> None:
        batch, pref_cache, prod_cache, in_cache, cross_caches, sizes, head_caches = cache
        p = self.params
        dv = mlp_backward(p, "head", doutput[:, None], head_caches)
        dv_up, dv_fi = concat_backward(dv, sizes)

        dx0 = cross_network_backward(dv_fi, cross_caches, p)
        input_block_backward(p, dx0, in_cache)

        dv_u, dv_p = elementwise_product_backward(dv_up, prod_cache)
        p["game_emb"].accumulate_rows(batch.games, dv_p)
        user_pref_backward(dv_u, pref_cache, p)
