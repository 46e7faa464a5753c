"""
dpl/services/evaluation.py

Evaluation of a trained model on a dataset in either inference mode, and
the side-by-side biased/unbiased comparison.
"""
from __future__ import annotations

import logging
from typing import Sequence, Tuple

from dpl.api.schemas import ComparisonDocument
from dpl.core.errors import ConfigError
from dpl.core.performance import track
from dpl.data.dataset import Dataset
from dpl.modeling.model import ModelState
from dpl.services.inference import MODES, Mode, infer_dataset, predict
from dpl.services.metrics import (
    MetricsReport,
    confusion_matrix,
    fine_recall,
    metrics_report,
    recall_at_k_grouped,
)

logger = logging.getLogger(__name__)


def check_compatible(model: ModelState, dataset: Dataset) -> None:
    d_in, _, num_classes = model.dims
    if dataset.feature_dim != d_in:
        raise ConfigError(f"Dataset features have {dataset.feature_dim} dims, model expects {d_in}")
    if dataset.num_classes > num_classes:
        raise ConfigError(
            f"Dataset has {dataset.num_classes} classes, model has {num_classes}")


def evaluate(model: ModelState, dataset: Dataset, mode: Mode,
             topk: Sequence[int] = ()) -> MetricsReport:
    """Metrics of `model` on `dataset`; confusion is |P| x |P| of the model."""
    if mode not in MODES:
        raise ConfigError(f"Unknown inference mode: {mode}. Choose from {MODES}")
    check_compatible(model, dataset)
    with track(f"eval[{mode}]"):
        traces = infer_dataset(model, dataset, mode)
        preds = [predict(t) for t in traces]
        report = metrics_report(confusion_matrix(preds, dataset.labels, model.num_classes), mode)
        report.recall_at_k = {int(k): recall_at_k_grouped(dataset, traces, int(k))
                              for k in sorted(set(topk))}
        report.fine_recall = fine_recall(dataset, preds)
    logger.info("%s: micro=%.4f mean=%.4f F=%.4f", mode, report.micro_recall,
                report.mean_recall, report.harmonic_f)
    return report


def compare_modes(model: ModelState, dataset: Dataset,
                  topk: Sequence[int] = ()) -> Tuple[MetricsReport, MetricsReport, ComparisonDocument]:
    """Evaluate both modes on the same inputs; deltas are unbiased - biased."""
    biased = evaluate(model, dataset, "biased", topk)
    unbiased = evaluate(model, dataset, "unbiased", topk)
    deltas = [None if b is None or u is None else u - b
              for b, u in zip(biased.per_class_recall, unbiased.per_class_recall)]
    doc = ComparisonDocument(
        biased=biased.to_document(),
        unbiased=unbiased.to_document(),
        micro_recall_delta=unbiased.micro_recall - biased.micro_recall,
        mean_recall_delta=unbiased.mean_recall - biased.mean_recall,
        harmonic_f_delta=unbiased.harmonic_f - biased.harmonic_f,
        per_class_recall_delta=deltas,
    )
    return biased, unbiased, doc
