from __future__ import annotations

import math
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MAX_HISTORY_LEN = 10


class InteractionRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    user: int
    game: int = Field(ge=0)
    day: int = Field(ge=1)
    spend: float

    @field_validator("spend")
    @classmethod
    def _spend_finite_non_negative(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("spend must be finite")
        if v < 0:
            raise ValueError(f"spend must be >= 0, got {v}")
        return v


class LabeledRecord(InteractionRecord):
    target: float


class ProfileRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    user: int
    history: list[int]
    t180: float = Field(ge=0)
    f180: int = Field(ge=0)

    @field_validator("history")
    @classmethod
    def _history_bounds(cls, v: list[int]) -> list[int]:
        if len(v) < 1:
            raise ValueError("history must contain at least one game")
        if len(v) > MAX_HISTORY_LEN:
            raise ValueError(f"history length > {MAX_HISTORY_LEN}")
        if any(g < 0 for g in v):
            raise ValueError("history ids must be >= 0")
        return v

    @model_validator(mode="after")
    def _no_spend_without_payments(self) -> "ProfileRecord":
        if self.f180 == 0 and self.t180 != 0:
            raise ValueError("f180 = 0 requires t180 = 0")
        return self


class NormStats(BaseModel):
    """Population statistics of the standardized-label populations of a training set."""

    scheme: str
    g_mean: float = 0.0
    g_std: float = Field(default=0.0, ge=0)
    u_mean: float = 0.0
    u_std: float = Field(default=0.0, ge=0)
    global_mean_nonzero: float = Field(default=0.0, ge=0)
    g_weight: float = 0.5
    u_weight: float = 0.5
    include_zeros: bool = False


class DatasetStats(BaseModel):
    """Summary statistics of a dataset laid out like a data-statistics table."""

    min_cost: Optional[float]
    max_cost: Optional[float]
    avg_cost: Optional[float]
    std_cost: Optional[float]
    median_cost: Optional[float]
    n_nonzero: int
    n_zero: int
    zero_fraction: float
    min_history_len: int
    max_history_len: int
    avg_history_len: float
    std_history_len: float
    n_download_apps: int
    n_paid_games: int
    n_users: int
    n_days: int


class RegressionMetrics(BaseModel):
    rmse: Optional[float] = None
    r2: Optional[float] = None
    auc: Optional[float] = None
    n: int = 0


class EvalReport(BaseModel):
    model_type: str
    seed: int
    hr: dict[str, float]
    ndcg: dict[str, float]
    rmse: Optional[float] = None
    r2: Optional[float] = None
    auc: Optional[float] = None
    paid: RegressionMetrics = Field(default_factory=RegressionMetrics)
    n_cases: int
    n_rows: int
    n_negatives: int = 100
    data_hash: str = ""

    def metric(self, name: str) -> Optional[float]:
        """Look up a metric by its report name, e.g. ``hr@10`` or ``r2``."""
        if "@" in name:
            family, k = name.split("@", 1)
            return getattr(self, family)[k]
        if name.startswith("paid_"):
            return getattr(self.paid, name[len("paid_") :])
        return getattr(self, name)


class StabilityReport(BaseModel):
    metric: str
    values: list[Optional[float]]
    mean: Optional[float] = None
    std: Optional[float] = None
    cov: Optional[float] = None


class StabilitySummary(BaseModel):
    model_type: str
    mode: Literal["retrain", "daily"]
    seeds: list[int]
    slices: list[str]
    reports: list[StabilityReport]

    def by_metric(self) -> dict[str, StabilityReport]:
        return {r.metric: r for r in self.reports}


class ComparisonRow(BaseModel):
    model_type: str
    metrics: dict[str, Optional[float]]
    per_seed: dict[str, dict[str, Optional[float]]]


class ComparisonReport(BaseModel):
    seeds: list[int]
    ks: list[int]
    scheme: str
    rows: list[ComparisonRow]
    best_model: Optional[str] = None
    runner_up: Optional[str] = None
    p_value: Optional[float] = None


class TensorEntry(BaseModel):
    name: str
    shape: list[int]
    encoding: Literal["base64", "file"]
    data: Optional[str] = None
    file: Optional[str] = None
    nbytes: int
    digest: str


class CheckpointManifest(BaseModel):
    version: int
    model_type: str
    hyperparams: dict[str, Any]
    encoder: dict[str, Any]
    standardizer: Optional[dict[str, Any]] = None
    tensors: list[TensorEntry]
