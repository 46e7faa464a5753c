"""
dpl/services/metrics.py

Classifier-level recall metrics: micro recall (R analog), mean per-class
recall (mR analog), their harmonic (F) and arithmetic (M) means, and
top-K recall within pseudo-scene groups.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from dpl.api.schemas import MetricsDocument
from dpl.core.errors import ConfigError, DimensionError
from dpl.data.dataset import Dataset


@dataclass(eq=False)
class ConfusionMatrix:
    """counts[t][p]: instances of true class t predicted as p."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(eq=False)
class MetricsReport:
    mode: str
    micro_recall: float
    per_class_recall: List[Optional[float]]
    mean_recall: float
    harmonic_f: float
    arithmetic_mean: float
    present_classes: List[int]
    confusion: ConfusionMatrix
    recall_at_k: Dict[int, float] = field(default_factory=dict)
    fine_recall: Optional[Dict[int, float]] = None

    def to_document(self) -> MetricsDocument:
        return MetricsDocument(
            mode=self.mode,
            micro_recall=self.micro_recall,
            mean_recall=self.mean_recall,
            harmonic_f=self.harmonic_f,
            arithmetic_mean=self.arithmetic_mean,
            per_class_recall=self.per_class_recall,
            recall_at_k={str(k): v for k, v in sorted(self.recall_at_k.items())},
            present_classes=self.present_classes,
            confusion=self.confusion.counts.tolist(),
            fine_recall=None if self.fine_recall is None
            else {str(k): v for k, v in sorted(self.fine_recall.items())},
        )

    @classmethod
    def from_document(cls, doc: MetricsDocument) -> "MetricsReport":
        return cls(
            mode=doc.mode,
            micro_recall=doc.micro_recall,
            per_class_recall=list(doc.per_class_recall),
            mean_recall=doc.mean_recall,
            harmonic_f=doc.harmonic_f,
            arithmetic_mean=doc.arithmetic_mean,
            present_classes=list(doc.present_classes),
            confusion=ConfusionMatrix(np.array(doc.confusion, dtype=np.int64)),
            recall_at_k={int(k): v for k, v in doc.recall_at_k.items()},
            fine_recall=None if doc.fine_recall is None
            else {int(k): v for k, v in doc.fine_recall.items()},
        )


def confusion_matrix(preds: Sequence[int], labels: Sequence[int],
                     num_classes: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise DimensionError(f"{len(preds)} predictions for {len(labels)} labels")
    if preds.size and (preds.min() < 0 or labels.min() < 0
                       or preds.max() >= num_classes or labels.max() >= num_classes):
        raise ConfigError(f"predictions and labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def harmonic_mean(x: float, y: float) -> float:
    return 2.0 * x * y / (x + y) if x + y > 0 else 0.0


def metrics_report(cm: ConfusionMatrix, mode: str) -> MetricsReport:
    """
    Recall summary of a confusion matrix.

    Classes with no test instances are excluded from mean_recall, reported
    as None in per_class_recall and left out of present_classes.
    """
    total = cm.total
    if total == 0:
        raise ConfigError("Cannot summarise an empty confusion matrix")
    diagonal = np.diag(cm.counts)
    row_sums = cm.counts.sum(axis=1)
    present = [int(i) for i in np.flatnonzero(row_sums > 0)]
    per_class: List[Optional[float]] = [
        float(diagonal[i] / row_sums[i]) if row_sums[i] > 0 else None
        for i in range(cm.num_classes)
    ]
    micro = float(diagonal.sum() / total)
    mean = float(np.mean([per_class[i] for i in present]))
    return MetricsReport(
        mode=mode,
        micro_recall=micro,
        per_class_recall=per_class,
        mean_recall=mean,
        harmonic_f=harmonic_mean(micro, mean),
        arithmetic_mean=(micro + mean) / 2.0,
        present_classes=present,
        confusion=cm,
    )


def recall_at_k_grouped(dataset: Dataset, traces: Sequence, K: int) -> float:
    """
    Mean over groups of (correct predictions among the group's top-K most
    confident instances) / (group size). Confidence ties keep dataset order.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if len(traces) != len(dataset):
        raise DimensionError(f"{len(traces)} traces for {len(dataset)} instances")
    by_group: Dict[int, List[int]] = defaultdict(list)
    for n, group in enumerate(dataset.groups):
        by_group[int(group)].append(n)

    recalls = []
    for group in sorted(by_group):
        members = by_group[group]
        ranked = sorted(members, key=lambda n: -float(np.max(traces[n].probabilities)))
        hits = sum(1 for n in ranked[:K]
                   if int(np.argmax(traces[n].probabilities)) == int(dataset.labels[n]))
        recalls.append(hits / len(members))
    return float(np.mean(recalls))


def fine_recall(dataset: Dataset, preds: Sequence[int]) -> Optional[Dict[int, float]]:
    """Recall of the coarse label within each fine cluster, when provenance exists."""
    if dataset.fine is None:
        return None
    preds = np.asarray(preds, dtype=np.int64)
    correct = preds == dataset.labels
    return {int(k): float(np.mean(correct[dataset.fine == k]))
            for k in np.unique(dataset.fine)}
