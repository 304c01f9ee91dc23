from __future__ import annotations

from dataclasses import dataclass
from typing import final

import numpy as np

from ..features import FeatureBatch, FeatureEncoder
from ..tensor import init_embedding
from .base import BaseScorer


def fm_layout(encoder: FeatureEncoder) -> dict[str, int]:
    """Offsets of each field in the one-hot feature space."""
    game = encoder.n_users
    history = game + encoder.paid_catalog_size
    dense = history + encoder.download_catalog_size + 1
    return {"user": 0, "game": game, "history": history, "dense": dense, "size": dense + encoder.n_dense}


def fm_inputs(batch: FeatureBatch, layout: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
    """(active feature ids, values) per row; the history pad slot carries value 0."""
    n = len(batch)
    n_dense = batch.dense.shape[1]
    idx = np.concatenate(
        [
            (layout["user"] + batch.users)[:, None],
            (layout["game"] + batch.games)[:, None],
            layout["history"] + batch.history,
            np.broadcast_to(layout["dense"] + np.arange(n_dense), (n, n_dense)),
        ],
        axis=1,
    )
    val = np.concatenate(
        [np.ones((n, 2)), batch.history_mask, batch.dense],
        axis=1,
    )
    return idx, val


def fm_score(idx: np.ndarray, val: np.ndarray, w0: np.ndarray, w: np.ndarray, V: np.ndarray):
    """w0 + sum_i w_i x_i + 1/2 sum_f [(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2]"""
    xv = V[idx] * val[..., None]
    s = xv.sum(axis=1)
    linear = (w[idx] * val).sum(axis=1)
    pairwise = 0.5 * (s * s - (xv * xv).sum(axis=1)).sum(axis=1)
    return w0[0] + linear + pairwise, (idx, val, xv, s)


def fm_backward(dy: np.ndarray, cache, n_features: int, k: int):
    idx, val, xv, s = cache
    dw0 = np.array([dy.sum()])
    dw = np.zeros(n_features)
    np.add.at(dw, idx, dy[:, None] * val)
    dV = np.zeros((n_features, k))
    np.add.at(dV, idx, dy[:, None, None] * val[..., None] * (s[:, None, :] - xv))
    return dw0, dw, dV


@final
@dataclass
class FMScorer(BaseScorer):
    """Second-order factorization machine over user, game, history and dense fields."""

    model_type = "fm"
    user_id_free = False

    def init_params(self, rng: np.random.Generator) -> None:
        self.layout = fm_layout(self.encoder)
        n = self.layout["size"]
        pad = self.layout["history"] + self.encoder.pad_id
        self.params.add("w0", np.zeros(1))
        self.params.add("w", np.zeros(n), frozen_rows=(pad,))
        self.params.add("V", init_embedding(rng, n, self.embed_dim, pad_row=pad), frozen_rows=(pad,))

    def forward(self, batch: FeatureBatch):
        idx, val = fm_inputs(batch, self.layout)
        p = self.params
        return fm_score(idx, val, p["w0"].values, p["w"].values, p["V"].values)

    def backward(self, doutput: np.ndarray, cache) -> None:
        dw0, dw, dV = fm_backward(doutput, cache, self.layout["size"], self.embed_dim)
        self.params["w0"].accumulate(dw0)
        self.params["w"].accumulate(dw)
        self.params["V"].accumulate(dV)
