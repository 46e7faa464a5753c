"""
dpl/data/dataset.py

Labelled relation-feature datasets.
Features are stored as one (count, feature_dim) float64 array; LabeledInstance
is a row view for callers that want per-instance records.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from dpl.core.errors import ConfigError, DataFormatError


@dataclass(frozen=True, eq=False)
class LabeledInstance:
    """One raw relation feature with its class label and pseudo-scene group."""

    id: int
    group: int
    label: int
    feature: np.ndarray
    fine: Optional[int] = None


@dataclass(eq=False)
class Dataset:
    """
    Column-oriented dataset.

    Attributes:
        ids, groups, labels: int64 arrays of length count
        features: float64 array (count, feature_dim)
        num_classes: |P|
        class_names: optional label names
        fine: optional fine-cluster provenance (not visible to the model)
    """

    ids: np.ndarray
    groups: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    num_classes: int
    class_names: Optional[List[str]] = None
    fine: Optional[np.ndarray] = None
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.fine is not None:
            self.fine = np.asarray(self.fine, dtype=np.int64)
        self._validate()

    def _validate(self) -> None:
        count = len(self.labels)
        if count == 0:
            raise DataFormatError("Dataset is empty", path=self.source)
        if self.features.ndim != 2 or self.features.shape[0] != count:
            raise DataFormatError(
                f"Feature array shape {self.features.shape} does not match {count} labels",
                path=self.source)
        if len(self.ids) != count or len(self.groups) != count:
            raise DataFormatError("ids/groups/labels lengths differ", path=self.source)
        if self.fine is not None and len(self.fine) != count:
            raise DataFormatError("fine provenance length differs", path=self.source)
        if self.num_classes < 1:
            raise DataFormatError(f"num_classes must be >= 1, got {self.num_classes}",
                                  path=self.source)
        bad = np.flatnonzero((self.labels < 0) | (self.labels >= self.num_classes))
        if bad.size:
            raise DataFormatError(
                f"label {int(self.labels[bad[0]])} outside [0, {self.num_classes})",
                path=self.source, row=int(bad[0]) + 1)
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError("features contain non-finite values", path=self.source)
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise DataFormatError(
                f"{len(self.class_names)} class names for {self.num_classes} classes",
                path=self.source)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[LabeledInstance]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> LabeledInstance:
        return LabeledInstance(
            id=int(self.ids[i]),
            group=int(self.groups[i]),
            label=int(self.labels[i]),
            feature=self.features[i],
            fine=None if self.fine is None else int(self.fine[i]),
        )

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def instances(self) -> List[LabeledInstance]:
        return list(self)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Dataset restricted to `indices`, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise ConfigError("Subset would be empty")
        return Dataset(
            ids=self.ids[idx],
            groups=self.groups[idx],
            labels=self.labels[idx],
            features=self.features[idx],
            num_classes=self.num_classes,
            class_names=self.class_names,
            fine=None if self.fine is None else self.fine[idx],
        )

    @classmethod
    def from_instances(cls, instances: Sequence[LabeledInstance], num_classes: int,
                       class_names: Optional[List[str]] = None) -> "Dataset":
        if not instances:
            raise DataFormatError("Dataset is empty")
        dims = {len(inst.feature) for inst in instances}
        if len(dims) != 1:
            raise DataFormatError(f"Feature dimensions differ across instances: {sorted(dims)}")
        fine = None
        if all(inst.fine is not None for inst in instances):
            fine = [inst.fine for inst in instances]
        return cls(
            ids=[inst.id for inst in instances],
            groups=[inst.group for inst in instances],
            labels=[inst.label for inst in instances],
            features=np.vstack([np.asarray(inst.feature, dtype=np.float64)
                                for inst in instances]),
            num_classes=num_classes,
            class_names=class_names,
            fine=fine,
        )

    def equals(self, other: "Dataset") -> bool:
        """Value equality (provenance included when both carry it)."""
        same = (
            self.num_classes == other.num_classes
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.groups, other.groups)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )
        if same and self.fine is not None and other.fine is not None:
            same = np.array_equal(self.fine, other.fine)
        return bool(same)
