from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, final

import numpy as np

from ..exceptions import NumericError
from ..features import FeatureBatch
from ..tensor import ParamStore, sigmoid, softplus
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

SIGMA_FLOOR = np.sqrt(1e-7)
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
MAX_LOG_SPEND = 50.0


def ziln_params(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(pay_prob, mu, sigma) from the three output logits."""
    pay_prob = sigmoid(logits[:, 0])
    mu = logits[:, 1]
    sigma = np.maximum(softplus(logits[:, 2]), SIGMA_FLOOR)
    return pay_prob, mu, sigma


def ziln_head(x: np.ndarray, params: ParamStore, n_layers: int, prefix: str = "head"):
    logits, _ = mlp_forward(params, prefix, x, n_layers)
    return ziln_params(logits)


def ziln_expected_spend(logits: np.ndarray) -> np.ndarray:
    pay_prob, mu, sigma = ziln_params(logits)
    return pay_prob * np.exp(np.minimum(mu + 0.5 * sigma**2, MAX_LOG_SPEND))


def ziln_loss(logits: np.ndarray, spend: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean zero-inflated lognormal negative log-likelihood and its logit gradient.

    Zero spends contribute -log(1 - pay_prob); positive spends contribute
    -log(pay_prob) plus the lognormal negative log-density.
    """
    spend = np.asarray(spend, dtype=np.float64)
    n = len(spend)
    if n == 0:
        raise ValueError("ziln_loss needs a non-empty batch")
    l0, mu, l2 = logits[:, 0], logits[:, 1], logits[:, 2]
    positive = spend > 0
    sp = softplus(l2)
    sigma = np.maximum(sp, SIGMA_FLOOR)
    log_y = np.log(np.where(positive, spend, 1.0))
    resid = log_y - mu

    per_row = np.where(
        positive,
        softplus(-l0) + log_y + np.log(sigma) + HALF_LOG_2PI + resid**2 / (2.0 * sigma**2),
        softplus(l0),
    )
    loss = float(per_row.mean())
    if not np.isfinite(loss):
        raise NumericError("non-finite ziln loss")

    dlogits = np.zeros_like(logits)
    dlogits[:, 0] = sigmoid(l0) - positive
    dlogits[:, 1] = np.where(positive, -resid / sigma**2, 0.0)
    dsigma = np.where(positive, 1.0 / sigma - resid**2 / sigma**3, 0.0)
    dlogits[:, 2] = dsigma * np.where(sp > SIGMA_FLOOR, sigmoid(l2), 0.0)
    return loss, dlogits / n


@final
@dataclass
class ZILNScorer(BaseScorer):
    """Zero-inflated lognormal head over the shared input block, trained on raw spends."""

    head_mlp_sizes: Sequence[int] = field(default_factory=lambda: [16, 3])

    model_type = "ziln"
    uses_raw_targets = True

    def validate(self) -> None:
        check_head_sizes(self.head_mlp_sizes, out_dim=3)

    def init_params(self, rng: np.random.Generator) -> None:
        d0 = add_input_block(self.params, rng, self.encoder, self.embed_dim)
        add_mlp(self.params, rng, "head", d0, self.head_mlp_sizes)

    def forward(self, batch: FeatureBatch):
        x0, in_cache = input_block_forward(self.params, batch)
        logits, head_caches = mlp_forward(self.params, "head", x0, len(self.head_mlp_sizes))
        return logits, (in_cache, head_caches)

    def backward(self, doutput: np.ndarray, cache) -> None:
        in_cache, head_caches = cache
        dx0 = mlp_backward(self.params, "head", doutput, head_caches)
        input_block_backward(self.params, dx0, in_cache)

    def predict(self, output: np.ndarray) -> np.ndarray:
        return ziln_expected_spend(output)

    def loss(self, output: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
        return ziln_loss(output, targets)
