from __future__ import annotations

from dataclasses import dataclass
from typing import final

import numpy as np

from ..features import FeatureBatch
from ..tensor import ParamStore, embedding_lookup, init_embedding
from .base import BaseScorer


def mf_score(users: np.ndarray, games: np.ndarray, params: ParamStore):
    """global_bias + b_u + b_p + <e_u, e_p>"""
    eu = embedding_lookup(params["user_emb"].values, users)
    ep = embedding_lookup(params["game_emb"].values, games)
    y = (
        params["global_bias"].values[0]
        + params["user_bias"].values[users]
        + params["game_bias"].values[games]
        + np.einsum("bk,bk->b", eu, ep)
    )
    return y, (users, games, eu, ep)


@final
@dataclass
class MFScorer(BaseScorer):
    """Biased matrix factorization over user and game ids."""

    model_type = "mf"
    user_id_free = False

    def init_params(self, rng: np.random.Generator) -> None:
        n_users, n_games, k = self.encoder.n_users, self.encoder.paid_catalog_size, self.embed_dim
        self.params.add("global_bias", np.zeros(1))
        self.params.add("user_bias", np.zeros(n_users))
        self.params.add("game_bias", np.zeros(n_games))
        self.params.add("user_emb", init_embedding(rng, n_users, k))
        self.params.add("game_emb", init_embedding(rng, n_games, k))

    def forward(self, batch: FeatureBatch):
        return mf_score(batch.users, batch.games, self.params)

    def backward(self, doutput: np.ndarray, cache) -> None:
        users, games, eu, ep = cache
        p = self.params
        p["global_bias"].grad[0] += doutput.sum()
        p["user_bias"].accumulate_rows(users, doutput)
        p["game_bias"].accumulate_rows(games, doutput)
        p["user_emb"].accumulate_rows(users, doutput[:, None] * ep)
        p["game_emb"].accumulate_rows(games, doutput[:, None] * eu)
