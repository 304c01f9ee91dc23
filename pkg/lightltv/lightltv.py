from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional, final

import numpy as np

from .base import Dataset, ExperimentConfig, TrainConfig
from .checkpoint import save_checkpoint
from .data import describe_dataset, generate_synthetic, load_dataset, split_temporal, write_dataset
from .evaluate import compare_models, comparison_frame, evaluate_model, stability_run
from .features import FeatureEncoder
from .models import build_model, verify_model_type
from .models.base import BaseScorer
from .namespace import NameSpace, artifact_path
from .standardize import LabeledDataset, standardize_dataset
from .train import TrainTrace, train
from .types import ComparisonReport, EvalReport, StabilitySummary
from .utils import logger, write_json


@dataclass
class TrainingRun:
    model: BaseScorer
    trace: TrainTrace
    labeled: LabeledDataset
    val: Optional[Dataset]
    test: Dataset


@final
@dataclass
class LightLTV:
    """Runs the generate -> standardize -> train -> evaluate pipeline from one config."""

    config: ExperimentConfig = field(default_factory=ExperimentConfig)
    _dataset: Optional[Dataset] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        for model_type in [self.config.model_type, *self.config.models]:
            verify_model_type(model_type)
        if not os.path.exists(self.config.output_dir):
            logger.info(f"Creating output directory {self.config.output_dir}")
            os.makedirs(self.config.output_dir)

        global_config = asdict(self.config)
        _print_config = ",\n  ".join([f"{k} = {v}" for k, v in global_config.items()])
        logger.debug(f"LightLTV init with param:\n  {_print_config}\n")

    @property
    def output_dir(self) -> str:
        return self.config.output_dir

    def echo_config(self, extra: Optional[dict[str, Any]] = None) -> None:
        resolved = asdict(self.config)
        resolved["train"]["scheme"] = self.config.train.scheme.value
        if extra:
            resolved.update(extra)
        write_json(resolved, artifact_path(self.output_dir, NameSpace.CONFIG_ECHO))

    def dataset(self) -> Dataset:
        if self._dataset is None:
            if self.config.data_dir:
                self._dataset = load_dataset(self.config.data_dir)
            else:
                self._dataset = generate_synthetic(self.config.gen, threads=self.config.threads)
        return self._dataset

    def generate(self) -> Dataset:
        ds = self.dataset()
        write_dataset(ds, self.output_dir)
        write_json(describe_dataset(ds).model_dump(), artifact_path(self.output_dir, NameSpace.DATA_STATS))
        self.echo_config()
        return ds

    def split(self) -> tuple[Dataset, Optional[Dataset], Dataset]:
        """(fit, validation, test); validation is the last ``val_days`` of the training window."""
        train, test = split_temporal(self.dataset(), self.config.train_days)
        fit_days = self.config.train_days - self.config.val_days
        if self.config.val_days == 0 or fit_days < 1:
            return train, None, test
        mask = train.days <= fit_days
        fit, val = train.take(np.flatnonzero(mask)), train.take(np.flatnonzero(~mask))
        if len(val) == 0:
            return train, None, test
        return fit, val, test

    def standardize(self, train: Dataset) -> LabeledDataset:
        return standardize_dataset(
            train,
            self.config.train.scheme,
            include_zeros=self.config.include_zeros,
            g_weight=self.config.g_weight,
            u_weight=self.config.u_weight,
        )

    def build_model(self, model_type: str, train: Dataset, seed: int) -> BaseScorer:
        hyperparams = dict(self.config.model_hyperparams.get(model_type, {}))
        hyperparams.setdefault("seed", seed)
        return build_model(model_type, FeatureEncoder.from_dataset(train), **hyperparams)

    def train_config(self, seed: int) -> TrainConfig:
        return replace(self.config.train, seed=seed, threads=self.config.threads)

    def run_training(self, model_type: Optional[str] = None, seed: Optional[int] = None) -> TrainingRun:
        model_type = model_type or self.config.model_type
        seed = self.config.train.seed if seed is None else seed
        fit, val, test = self.split()
        labeled = self.standardize(fit)
        model = self.build_model(model_type, fit, seed)
        model, trace = train(model, labeled, self.train_config(seed), eval_data=val)
        return TrainingRun(model, trace, labeled, val, test)

    def evaluate(self, model: BaseScorer, test: Dataset, standardizer, seen: Optional[Dataset] = None) -> EvalReport:
        return evaluate_model(
            model,
            test,
            standardizer,
            ks=self.config.ks,
            seed=self.config.train.seed,
            n_negatives=self.config.train.n_negatives,
            threads=self.config.threads,
            exclude_interacted=self.config.exclude_interacted,
            seen=seen,
        )

    def run_experiment(self, model_type: Optional[str] = None, seed: Optional[int] = None) -> EvalReport:
        run = self.run_training(model_type, seed)
        report = self.evaluate(run.model, run.test, run.labeled.standardizer, seen=run.labeled.dataset)
        return report.model_copy(update={"seed": run.model.seed})

    def train_and_save(self, model_type: Optional[str] = None, seed: Optional[int] = None) -> TrainingRun:
        run = self.run_training(model_type, seed)
        save_checkpoint(
            run.model,
            artifact_path(self.output_dir, NameSpace.MODEL_CHECKPOINT),
            standardizer=run.labeled.standardizer,
        )
        run.trace.to_csv(artifact_path(self.output_dir, NameSpace.TRAIN_TRACE))
        self.echo_config()
        return run

    def stability(self, model_type: Optional[str] = None) -> StabilitySummary:
        model_type = model_type or self.config.model_type
        mode = self.config.stability_mode

        def experiment(seed: int):
            if mode == "retrain":
                return self.run_experiment(model_type, seed)
            run = self.run_training(model_type, seed)
            return [
                self.evaluate(run.model, run.test.take(np.flatnonzero(run.test.days == day)), run.labeled.standardizer)
                for day in np.unique(run.test.days)
            ]

        summary = stability_run(experiment, self.config.seeds, model_type, mode=mode, ks=self.config.ks)
        write_json(summary.model_dump(), artifact_path(self.output_dir, NameSpace.REPORT_STABILITY))
        self.echo_config()
        return summary

    def compare(self, models: Optional[list[str]] = None) -> ComparisonReport:
        models = models or self.config.models
        for model_type in models:
            verify_model_type(model_type)
        report = compare_models(
            self.run_experiment,
            models,
            self.config.seeds,
            ks=self.config.ks,
            scheme=self.config.train.scheme.value,
        )
        write_json(report.model_dump(), artifact_path(self.output_dir, NameSpace.REPORT_COMPARE))
        comparison_frame(report).to_csv(
            artifact_path(self.output_dir, NameSpace.REPORT_COMPARE_CSV), index=False, float_format="%.6f"
        )
        self.echo_config()
        return report
