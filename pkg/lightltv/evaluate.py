from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from time import time
from typing import TYPE_CHECKING, Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import ttest_ind
from sklearn.metrics import mean_squared_error, r2_score, roc_auc_score

from .base import Dataset
from .exceptions import ConfigError, DataError, NumericError
from .standardize import LabelStandardizer
from .types import (
    ComparisonReport,
    ComparisonRow,
    EvalReport,
    RegressionMetrics,
    StabilityReport,
    StabilitySummary,
)
from .utils import compute_array_hash, logger

if TYPE_CHECKING:
    from .models.base import BaseScorer

DEFAULT_KS = (1, 5, 10)
N_NEGATIVES = 100


def sample_negatives(
    positive: int,
    catalog: int,
    n: int = N_NEGATIVES,
    seed: int = 0,
    case_index: int = 0,
    exclude: Optional[set[int]] = None,
) -> np.ndarray:
    """``n`` distinct games drawn uniformly from the catalog minus the positive.

    The draw only depends on (seed, case_index). ``exclude`` removes further
    games, e.g. everything else the user interacted with.
    """
    extra = sorted(g for g in (exclude or ()) if g != positive and 0 <= g < catalog)
    if catalog - 1 - len(extra) < n:
        raise ConfigError(f"cannot draw {n} negatives from a catalog of {catalog} games")
    rng = np.random.default_rng([seed, case_index])
    if not extra:
        draw = rng.choice(catalog - 1, size=n, replace=False)
        return draw + (draw >= positive)
    allowed = np.setdiff1d(np.arange(catalog), [positive, *extra], assume_unique=False)
    return rng.choice(allowed, size=n, replace=False)


def _tie_offset(n_ties: int, seed: int, case_index: int) -> int:
    """Tied candidates placed ahead of the positive by a seeded shuffle."""
    if n_ties <= 0:
        return 0
    rng = np.random.default_rng([seed, case_index, 1])
    order = rng.permutation(n_ties + 1)
    # the positive is element 0 of the tie group
    return int(np.flatnonzero(order == 0)[0])


def rank_positive(scores: np.ndarray, positive_index: int = 0, seed: int = 0, case_index: int = 0) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    s = scores[positive_index]
    higher = int((scores > s).sum())
    ties = int((scores == s).sum()) - 1
    return 1 + higher + _tie_offset(ties, seed, case_index)


def rank_cases(scores: np.ndarray, case_indices: np.ndarray, seed: int = 0) -> np.ndarray:
    """rank_positive for every row of a (cases, slate) matrix with the positive in column 0."""
    return np.fromiter(
        (rank_positive(row, 0, seed, int(c)) for row, c in zip(scores, case_indices)),
        dtype=np.int64,
        count=len(scores),
    )


def hr_at_k(rank, k: int):
    return (np.asarray(rank) <= k).astype(np.int64) if np.ndim(rank) else int(rank <= k)


def ndcg_at_k(rank, k: int):
    r = np.asarray(rank, dtype=np.float64)
    value = np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0)
    return value if np.ndim(rank) else float(value)


@dataclass
class RankedCases:
    """One leave-one-out case per test interaction; column 0 of ``candidates`` is the positive."""

    rows: np.ndarray
    candidates: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def positives(self) -> np.ndarray:
        return self.candidates[:, 0]


def build_cases(
    test: Dataset,
    n_negatives: int = N_NEGATIVES,
    seed: int = 0,
    max_cases: Optional[int] = None,
    exclude_interacted: bool = False,
    seen: Optional[Dataset] = None,
) -> RankedCases:
    n = len(test)
    rows = np.arange(n)
    if max_cases is not None and n > max_cases:
        rows = np.sort(np.random.default_rng([seed, 2]).choice(n, size=max_cases, replace=False))

    interacted: dict[int, set[int]] = {}
    if exclude_interacted:
        for part in (test, seen) if seen is not None else (test,):
            for u, g in zip(part.users.tolist(), part.games.tolist()):
                interacted.setdefault(u, set()).add(g)

    candidates = np.empty((len(rows), n_negatives + 1), dtype=np.int64)
    for c, row in enumerate(rows):
        positive = int(test.games[row])
        exclude = interacted.get(int(test.users[row])) if exclude_interacted else None
        candidates[c, 0] = positive
        candidates[c, 1:] = sample_negatives(
            positive, test.paid_catalog_size, n_negatives, seed, int(row), exclude
        )
    return RankedCases(rows, candidates, seed)


def score_cases(model: "BaseScorer", test: Dataset, cases: RankedCases, threads: int = 1, chunk_cases: int = 256) -> np.ndarray:
    catalog = model.encoder.paid_catalog_size
    if cases.candidates.size and cases.candidates.max() >= catalog:
        c = int(np.argmax(cases.candidates.max(axis=1) >= catalog))
        raise DataError(
            f"candidate game {int(cases.candidates[c].max())} outside the model's paid catalog of size {catalog}",
            row=int(cases.rows[c]) + 1,
            column="game",
        )
    batch = model.encoder.encode(test, cases.rows)
    slate = cases.candidates.shape[1]
    chunks = [slice(i, i + chunk_cases) for i in range(0, len(cases), chunk_cases)]

    def work(chunk: slice) -> np.ndarray:
        expanded = batch.take(chunk).with_candidates(cases.candidates[chunk])
        return model.score(expanded).reshape(-1, slate)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros((0, slate))


@dataclass
class RankingResult:
    hr: dict[str, float]
    ndcg: dict[str, float]
    ranks: np.ndarray

    @property
    def n_cases(self) -> int:
        return len(self.ranks)


def evaluate_ranking(
    model: "BaseScorer",
    test: Dataset,
    ks: Sequence[int] = DEFAULT_KS,
    cases: Optional[RankedCases] = None,
    n_negatives: int = N_NEGATIVES,
    seed: int = 0,
    max_cases: Optional[int] = None,
    threads: int = 1,
) -> RankingResult:
    if cases is None:
        cases = build_cases(test, n_negatives, seed, max_cases)
    if len(cases) == 0:
        raise ConfigError("no ranking cases: the test set is empty")
    scores = score_cases(model, test, cases, threads)
    if not np.all(np.isfinite(scores)):
        bad = int(np.argmax(~np.isfinite(scores).all(axis=1)))
        raise NumericError(
            "model produced non-finite ranking scores", details={"case": int(cases.rows[bad]) + 1}
        )
    ranks = rank_cases(scores, cases.rows, cases.seed)
    hr = {str(k): float(np.mean(hr_at_k(ranks, k))) for k in ks}
    ndcg = {str(k): float(np.mean(ndcg_at_k(ranks, k))) for k in ks}
    return RankingResult(hr, ndcg, ranks)


def regression_metrics(preds: np.ndarray, spends: np.ndarray, labels: Optional[np.ndarray] = None) -> RegressionMetrics:
    """RMSE, R2 and AUC; undefined metrics are None rather than 0.

    AUC labels default to spend > 0.
    """
    preds = np.asarray(preds, dtype=np.float64)
    spends = np.asarray(spends, dtype=np.float64)
    if preds.shape != spends.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {spends.shape}")
    if len(spends) == 0:
        return RegressionMetrics(n=0)
    labels = (spends > 0).astype(np.int64) if labels is None else np.asarray(labels)
    rmse = float(np.sqrt(mean_squared_error(spends, preds)))
    r2 = float(r2_score(spends, preds)) if np.var(spends) > 0 else None
    auc = float(roc_auc_score(labels, preds)) if len(np.unique(labels)) == 2 else None
    return RegressionMetrics(rmse=rmse, r2=r2, auc=auc, n=len(spends))


def regression_report(preds: np.ndarray, spends: np.ndarray) -> tuple[RegressionMetrics, RegressionMetrics]:
    """Metrics on all rows and on the spend > 0 rows."""
    paid = spends > 0
    return regression_metrics(preds, spends), regression_metrics(preds[paid], spends[paid])


def predict_spend(model: "BaseScorer", ds: Dataset, standardizer: Optional[LabelStandardizer]) -> np.ndarray:
    """Model predictions on the currency scale."""
    out = model.score(model.encoder.encode(ds))
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out)))
        raise NumericError("model produced non-finite spend predictions", details={"row": bad + 1})
    if model.uses_raw_targets or standardizer is None:
        return np.maximum(out, 0.0)
    return standardizer.inverse(out, ds)


def evaluate_model(
    model: "BaseScorer",
    test: Dataset,
    standardizer: Optional[LabelStandardizer],
    ks: Sequence[int] = DEFAULT_KS,
    seed: int = 0,
    n_negatives: int = N_NEGATIVES,
    max_cases: Optional[int] = None,
    threads: int = 1,
    exclude_interacted: bool = False,
    seen: Optional[Dataset] = None,
) -> EvalReport:
    """Leave-one-out ranking plus regression metrics on raw spends."""
    eval_begin = time()
    cases = build_cases(test, n_negatives, seed, max_cases, exclude_interacted, seen)
    ranking = evaluate_ranking(model, test, ks, cases=cases, seed=seed, threads=threads)
    preds = predict_spend(model, test, standardizer)
    overall, paid = regression_report(preds, test.spends)
    report = EvalReport(
        model_type=model.model_type,
        seed=seed,
        hr=ranking.hr,
        ndcg=ranking.ndcg,
        rmse=overall.rmse,
        r2=overall.r2,
        auc=overall.auc,
        paid=paid,
        n_cases=ranking.n_cases,
        n_rows=len(test),
        n_negatives=n_negatives,
        data_hash=compute_array_hash(test.users, test.games, test.days, test.spends),
    )
    k_max = str(max(ks))
    logger.info(
        f"[model={model.model_type}] HR@{k_max}={report.hr[k_max]:.4f} NDCG@{k_max}={report.ndcg[k_max]:.4f} "
        f"R2={report.r2} AUC={report.auc} cases={report.n_cases} [Time={time() - eval_begin:.1f}s]"
    )
    return report


def coefficient_of_variation(mean: float, std: float) -> Optional[float]:
    if mean == 0:
        return None
    return abs(std / mean)


def cov(values: Sequence[Optional[float]], metric: str = "value") -> StabilityReport:
    """Population std / |mean| of per-run values; None when undefined."""
    if len(values) < 2:
        raise ConfigError(f"CoV needs at least 2 values, got {len(values)}")
    vals = list(values)
    if any(v is None for v in vals):
        return StabilityReport(metric=metric, values=vals)
    arr = np.asarray(vals, dtype=np.float64)
    mean, std = float(arr.mean()), float(arr.std())
    return StabilityReport(metric=metric, values=vals, mean=mean, std=std, cov=coefficient_of_variation(mean, std))


def stability_metrics(ks: Sequence[int] = DEFAULT_KS) -> list[str]:
    names = ["r2", "rmse", "auc", "paid_r2", "paid_rmse"]
    names += [f"hr@{k}" for k in ks] + [f"ndcg@{k}" for k in ks]
    return names


def stability_from_reports(reports: Sequence[EvalReport], metrics: Sequence[str]) -> list[StabilityReport]:
    return [cov([r.metric(m) for r in reports], metric=m) for m in metrics]


def stability_run(
    experiment: Callable[[int], EvalReport | list[EvalReport]],
    seeds: Sequence[int],
    model_type: str,
    mode: str = "retrain",
    ks: Sequence[int] = DEFAULT_KS,
) -> StabilitySummary:
    """CoV of every metric across repeated experiments.

    ``retrain``: ``experiment(seed)`` trains and evaluates one replica per seed.
    ``daily``: ``experiment(seeds[0])`` trains once and returns one report per test slice.
    """
    metrics = stability_metrics(ks)
    if mode == "retrain":
        if len(seeds) < 2:
            raise ConfigError(f"stability needs at least 2 runs, got {len(seeds)}")
        reports = []
        for i, seed in enumerate(seeds):
            logger.info(f"Stability run {i + 1}/{len(seeds)} (seed={seed})")
            reports.append(experiment(seed))
        slices = [f"seed={s}" for s in seeds]
    elif mode == "daily":
        reports = experiment(seeds[0])
        if len(reports) < 2:
            raise ConfigError("daily stability needs at least 2 test days")
        slices = [f"slice={i}" for i in range(len(reports))]
    else:
        raise ConfigError(f"unknown stability mode '{mode}'")
    summary = StabilitySummary(
        model_type=model_type,
        mode=mode,
        seeds=list(seeds),
        slices=slices,
        reports=stability_from_reports(reports, metrics),
    )
    by_metric = summary.by_metric()
    key = f"hr@{max(ks)}"
    logger.info(
        f"Stability [{model_type}/{mode}]: cov({key})={by_metric[key].cov} cov(r2)={by_metric['r2'].cov}"
    )
    return summary


def compare_models(
    run: Callable[[str, int], EvalReport],
    models: Sequence[str],
    seeds: Sequence[int],
    ks: Sequence[int] = DEFAULT_KS,
    scheme: str = "bs",
) -> ComparisonReport:
    """Mean HR@K / NDCG@K per model over seeds, plus a Welch t-test of the top two on HR@max(K)."""
    if not models:
        raise ConfigError("compare needs at least one model")
    columns = [f"hr@{k}" for k in ks] + [f"ndcg@{k}" for k in ks]
    rows = []
    key_values: dict[str, list[float]] = {}
    key = f"hr@{max(ks)}"
    for model_type in models:
        per_seed = {}
        for seed in seeds:
            report = run(model_type, seed)
            per_seed[str(seed)] = {c: report.metric(c) for c in columns}
        metrics = {c: float(np.mean([per_seed[str(s)][c] for s in seeds])) for c in columns}
        key_values[model_type] = [per_seed[str(s)][key] for s in seeds]
        rows.append(ComparisonRow(model_type=model_type, metrics=metrics, per_seed=per_seed))

    ordered = sorted(rows, key=lambda r: r.metrics[key], reverse=True)
    best = ordered[0].model_type
    runner_up = ordered[1].model_type if len(ordered) > 1 else None
    p_value = None
    if runner_up is not None and len(seeds) >= 2:
        result = ttest_ind(key_values[best], key_values[runner_up], equal_var=False)
        p_value = float(result.pvalue) if np.isfinite(result.pvalue) else None
    return ComparisonReport(
        seeds=list(seeds),
        ks=list(ks),
        scheme=scheme,
        rows=rows,
        best_model=best,
        runner_up=runner_up,
        p_value=p_value,
    )


def comparison_frame(report: ComparisonReport) -> pd.DataFrame:
    """Table-shaped view: one row per model, one column per metric."""
    records = []
    for row in report.rows:
        record = {"model": row.model_type}
        for k in report.ks:
            record[f"HR@{k}"] = row.metrics[f"hr@{k}"]
        for k in report.ks:
            record[f"NDCG@{k}"] = row.metrics[f"ndcg@{k}"]
        records.append(record)
    return pd.DataFrame.from_records(records)
