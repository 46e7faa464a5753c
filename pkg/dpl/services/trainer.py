"""
dpl/services/trainer.py

SGD training loop. Each step samples a batch uniformly with replacement,
draws fresh Gaussian samples for the classes present, runs the analytic
backward pass, applies SGD and renormalises the prototypes.

Training is a pure function of (RunConfig, Dataset): the master seed is
split into independent sub-streams for initialisation, batch sampling and
sample drawing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from dpl.config import RunConfig
from dpl.core.errors import ConfigError, NumericError, TrainingAborted
from dpl.core.performance import track
from dpl.core.rng import SeededRng
from dpl.data.dataset import Dataset
from dpl.modeling.diversity import LossBreakdown, SampleSet, draw_samples, sample_counts
from dpl.modeling.model import (
    ModelState,
    init_model,
    prototype_norm_deviation,
    renormalize_prototypes,
)
from dpl.modeling.objective import GradientBuffer, backward

logger = logging.getLogger(__name__)

STREAM_INIT = 0
STREAM_BATCH = 1
STREAM_SAMPLES = 2


@dataclass(frozen=True)
class HistoryRecord:
    step: int
    loss: LossBreakdown
    norm_deviation: float


@dataclass
class TrainHistory:
    records: List[HistoryRecord] = field(default_factory=list)

    def append(self, record: HistoryRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(f"history step {record.step} is not after {self.records[-1].step}")
        self.records.append(record)

    def max_norm_deviation(self) -> float:
        return max((r.norm_deviation for r in self.records), default=0.0)

    def to_dict(self) -> Dict[str, list]:
        return {"records": [{"step": r.step, **r.loss.as_dict(),
                             "norm_deviation": r.norm_deviation} for r in self.records]}


class SGD:
    """
    Plain SGD with optional momentum over a model's parameter groups.

    v <- momentum * v + g;  param <- param - lr * v;  then prototypes are
    renormalised to unit length.
    """

    def __init__(self, model: ModelState, lr: float = 0.01, momentum: float = 0.0):
        if lr < 0 or momentum < 0:
            raise ConfigError(f"lr and momentum must be >= 0 (lr={lr}, momentum={momentum})")
        self.model = model
        self.lr = lr
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, grads: GradientBuffer) -> ModelState:
        bad = grads.first_non_finite()
        if bad is not None:
            group, max_abs = bad
            raise NumericError(
                f"non-finite gradient at step {self.model.step} in group '{group}' "
                f"(max |g| = {max_abs})")
        params = self.model.named_parameters()
        for name, g in grads:
            if self.momentum:
                v = self.velocity.get(name)
                v = g.copy() if v is None else self.momentum * v + g
                self.velocity[name] = v
            else:
                v = g
            params[name] -= self.lr * v
        return renormalize_prototypes(self.model)


def sgd_step(model: ModelState, grads: GradientBuffer, lr: float, momentum: float = 0.0,
             velocity: Optional[Dict[str, np.ndarray]] = None) -> ModelState:
    """One SGD update; `velocity` (if given) is carried between calls."""
    optimizer = SGD(model, lr=lr, momentum=momentum)
    if velocity is not None:
        optimizer.velocity = velocity
    return optimizer.step(grads)


def draw_samplesets(model: ModelState, classes, counts: List[int],
                    rng: SeededRng) -> Dict[int, SampleSet]:
    """Fresh SampleSets for `classes`, drawn in ascending class order."""
    return {k: draw_samples(model, k, counts[k], rng) for k in sorted(set(int(c) for c in classes))}


class Trainer:
    """Runs one training job for a config and dataset."""

    def __init__(self, config: RunConfig, dataset: Dataset):
        if len(dataset) == 0:
            raise ConfigError("Cannot train on an empty dataset")
        self.config = config.with_dataset_dims(dataset.feature_dim, dataset.num_classes)
        if self.config.num_classes < 2:
            raise ConfigError("Training needs at least 2 classes")
        self.dataset = dataset
        self._logger = logging.getLogger(__name__)
        master = SeededRng(self.config.seed)
        self.batch_rng = master.spawn(STREAM_BATCH)
        self.sample_rng = master.spawn(STREAM_SAMPLES)
        self.model = init_model(self.config.d_in, self.config.d, self.config.num_classes,
                                master.spawn(STREAM_INIT), hidden=self.config.hidden_width,
                                sigma2_floor=self.config.sigma2_floor)
        frequencies = np.bincount(dataset.labels, minlength=self.config.num_classes)
        self.counts = sample_counts(self.config.num_classes, self.config.N,
                                    self.config.n_schedule, frequencies.tolist(),
                                    self.config.n_per_class)
        self.optimizer = SGD(self.model, lr=self.config.lr, momentum=self.config.momentum)
        self.history = TrainHistory()

    def sample_batch(self) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self.dataset)
        idx = np.array([self.batch_rng.below(n) for _ in range(self.config.batch_size)])
        return self.dataset.features[idx], self.dataset.labels[idx]

    def train_step(self) -> LossBreakdown:
        X, y = self.sample_batch()
        samplesets: Dict[int, SampleSet] = {}
        if self.config.use_match_loss:
            samplesets = draw_samplesets(self.model, y, self.counts, self.sample_rng)
        breakdown, grads = backward(X, y, self.model, samplesets, self.config)
        if not np.isfinite(breakdown.total):
            raise TrainingAborted(f"non-finite loss at step {self.model.step}",
                                  step=self.model.step, last_model=self.model.copy())
        last_good = self.model.copy()
        try:
            self.optimizer.step(grads)
        except NumericError as e:
            # Renormalisation can fail after the update has been applied.
            raise TrainingAborted(str(e), step=self.model.step, last_model=last_good) from e
        self.model.step += 1
        return breakdown

    def run(self) -> Tuple[ModelState, TrainHistory]:
        cfg = self.config
        self._logger.info(
            "Training %d steps (d_in=%d, d=%d, classes=%d, N=%s, R=%g, alpha=%g, lr=%g)",
            cfg.steps, cfg.d_in, cfg.d, cfg.num_classes, self.counts, cfg.R, cfg.alpha, cfg.lr)
        with track("train"):
            for i in range(cfg.steps):
                breakdown = self.train_step()
                if i % cfg.log_interval == 0 or i == cfg.steps - 1:
                    record = HistoryRecord(step=i, loss=breakdown,
                                           norm_deviation=prototype_norm_deviation(self.model))
                    self.history.append(record)
                    self._logger.info(
                        "step %d: ce=%.6f ortho=%.6f match=%.6f total=%.6f norm_dev=%.2e",
                        i, breakdown.ce, breakdown.ortho, breakdown.match, breakdown.total,
                        record.norm_deviation)
        return self.model, self.history


def train(config: RunConfig, dataset: Dataset) -> Tuple[ModelState, TrainHistory]:
    """Train a model; deterministic given (config, dataset)."""
    return Trainer(config, dataset).run()
