from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np
import pandas as pd

from .base import Dataset, TrainConfig
from .exceptions import NumericError
from .tensor import AdamState, adam_step
from .utils import log_train_step, logger

if TYPE_CHECKING:
    from .features import FeatureBatch
    from .models.base import BaseScorer
    from .standardize import LabelStandardizer, LabeledDataset

TRACE_COLUMNS = ["step", "loss", "hr10", "ndcg10"]


def mse_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if len(preds) == 0:
        raise ValueError("mse_loss needs a non-empty batch")
    diff = preds - targets
    return float(np.mean(diff * diff))


def mse_loss_grad(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return 2.0 * (preds - targets) / len(preds)


@dataclass
class TracePoint:
    step: int
    loss: float
    hr10: Optional[float]
    ndcg10: Optional[float]


@dataclass
class TrainTrace:
    points: list[TracePoint] = field(default_factory=list)

    def append(self, point: TracePoint) -> None:
        if self.points and point.step <= self.points[-1].step:
            raise ValueError(f"trace steps must increase: {point.step} after {self.points[-1].step}")
        self.points.append(point)

    def __len__(self) -> int:
        return len(self.points)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(p) for p in self.points], columns=TRACE_COLUMNS)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


def targets_for(model: "BaseScorer", labeled: "LabeledDataset") -> np.ndarray:
    return labeled.dataset.spends if model.uses_raw_targets else labeled.targets


def epoch_order(rng: np.random.Generator, spends: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Row order of one epoch: zero-spend rows downsampled to ``zero_ratio`` per paid row."""
    rows = np.arange(len(spends))
    if cfg.zero_ratio is not None:
        paid = rows[spends > 0]
        zeros = rows[spends == 0]
        keep = min(len(zeros), int(round(cfg.zero_ratio * len(paid))))
        if keep < len(zeros):
            zeros = np.sort(rng.choice(zeros, size=keep, replace=False))
        rows = np.sort(np.concatenate([paid, zeros]))
    if cfg.shuffle:
        rows = rng.permutation(rows)
    return rows


def train_step(
    model: "BaseScorer",
    batch: "FeatureBatch",
    targets: np.ndarray,
    opt_state: AdamState,
) -> float:
    """forward -> loss -> backward -> adam_step"""
    loss = model.loss_and_backward(batch, targets)
    if not np.isfinite(loss):
        model.params.zero_grad()
        raise NumericError(f"non-finite loss at step {opt_state.t + 1}", step=opt_state.t + 1)
    adam_step(model.params, opt_state)
    return loss


def dataset_loss(model: "BaseScorer", batch: "FeatureBatch", targets: np.ndarray, chunk_size: int = 16384) -> float:
    total = 0.0
    for i in range(0, len(batch), chunk_size):
        out, _ = model.forward(batch.take(slice(i, i + chunk_size)))
        loss, _ = model.loss(out, targets[i : i + chunk_size])
        total += loss * len(targets[i : i + chunk_size])
    return total / max(len(batch), 1)


def train(
    model: "BaseScorer",
    labeled: "LabeledDataset",
    cfg: TrainConfig,
    eval_data: Optional[Dataset] = None,
    opt_state: Optional[AdamState] = None,
) -> tuple["BaseScorer", TrainTrace]:
    """Mini-batch Adam on the model's loss with a seeded row order.

    When ``eval_data`` is given, HR@10 / NDCG@10 are recorded at every
    evaluation point (step 0 included) and early stopping restores the best
    parameters seen.
    """
    from .evaluate import build_cases, evaluate_ranking

    rng = np.random.default_rng([cfg.seed, 3])
    opt_state = opt_state or AdamState(lr=cfg.lr)
    features = model.encoder.encode(labeled.dataset)
    targets = targets_for(model, labeled)
    spends = labeled.dataset.spends
    trace = TrainTrace()

    cases = None
    if eval_data is not None and len(eval_data):
        cases = build_cases(eval_data, cfg.n_negatives, cfg.seed, cfg.eval_cases)

    best_hr, best_snapshot, bad_points = -1.0, None, 0

    def record(step: int) -> bool:
        """Append a trace point; True when training should stop."""
        nonlocal best_hr, best_snapshot, bad_points
        loss = dataset_loss(model, features, targets)
        hr10 = ndcg10 = None
        if cases is not None:
            result = evaluate_ranking(model, eval_data, ks=(10,), cases=cases, threads=cfg.threads)
            hr10, ndcg10 = result.hr["10"], result.ndcg["10"]
        trace.append(TracePoint(step, loss, hr10, ndcg10))
        logger.info(f"[{model.model_type}] step {step}: loss={loss:.6f} hr10={hr10} ndcg10={ndcg10}")
        if hr10 is None or cfg.patience == 0:
            return False
        if hr10 > best_hr:
            best_hr, best_snapshot, bad_points = hr10, model.params.snapshot(), 0
            return False
        bad_points += 1
        return bad_points >= cfg.patience

    logger.info(
        f"Training {model.model_type} on {len(labeled)} rows: scheme={labeled.scheme.value} "
        f"lr={cfg.lr} batch_size={cfg.batch_size} epochs={cfg.epochs} seed={cfg.seed}"
    )
    step = 0
    stop = record(step)
    for epoch in range(cfg.epochs):
        if stop:
            break
        order = epoch_order(rng, spends, cfg)
        for start in range(0, len(order), cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            loss = train_step(model, features.take(rows), targets[rows], opt_state)
            step += 1
            log_train_step(epoch, step, loss)
            if cfg.eval_every and step % cfg.eval_every == 0:
                stop = record(step)
                if stop:
                    break
        if not cfg.eval_every and not stop:
            stop = record(step)

    if stop:
        logger.info(f"Early stopping at step {step}; best hr10={best_hr:.4f}")
    if best_snapshot is not None:
        model.params.restore(best_snapshot)
    return model, trace


def streaming_update(
    model: "BaseScorer",
    batch: Dataset,
    standardizer: "LabelStandardizer",
    opt_state: AdamState,
) -> "BaseScorer":
    """One gradient step on newly arrived interactions with frozen standardization.

    Rows carry their own profiles, so users never seen in training are fine.
    """
    if len(batch) == 0:
        return model
    targets = batch.spends if model.uses_raw_targets else standardizer.transform(batch)
    train_step(model, model.encoder.encode(batch), targets, opt_state)
    return model
