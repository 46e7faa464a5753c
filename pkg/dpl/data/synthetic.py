"""
dpl/data/synthetic.py

Synthetic long-tailed datasets with semantic diversity: several fine
Gaussian clusters are coarsened into one class label, so one label covers
several distinct meanings. Also the seeded train/test split.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from dpl.core.errors import ConfigError
from dpl.core.rng import SeededRng
from dpl.data.dataset import Dataset

logger = logging.getLogger(__name__)

DESK_FINE_COUNTS = (1500, 1500, 1500, 90, 60, 30)
DESK_FINE_TO_COARSE = (0, 0, 0, 1, 2, 3)
DESK_D_IN = 64
# Pairwise mean distance in units of the per-coordinate stddev.
DESK_MEAN_SPREAD = 3.0
DESK_GROUP_SIZE = 25


@dataclass
class GeneratorSpec:
    """Fine clusters, their sizes and the fine -> coarse label map."""

    fine_means: List[np.ndarray]
    fine_stddev: List[float]
    fine_counts: List[int]
    fine_to_coarse: List[int]
    group_size: int = DESK_GROUP_SIZE
    seed: int = 0
    class_names: Optional[List[str]] = None

    def __post_init__(self):
        self.fine_means = [np.asarray(m, dtype=np.float64) for m in self.fine_means]
        self._validate()

    def _validate(self) -> None:
        k = len(self.fine_means)
        if k == 0:
            raise ConfigError("Generator spec needs at least one fine cluster")
        if not (len(self.fine_stddev) == len(self.fine_counts) == len(self.fine_to_coarse) == k):
            raise ConfigError(
                "fine_means, fine_stddev, fine_counts and fine_to_coarse must have equal length")
        dims = {m.shape for m in self.fine_means}
        if len(dims) != 1 or self.fine_means[0].ndim != 1 or self.fine_means[0].size == 0:
            raise ConfigError(f"Fine means must share one dimension, got shapes {sorted(dims)}")
        if any(c < 1 for c in self.fine_counts):
            raise ConfigError("Every fine count must be >= 1")
        if any(s < 0 or not math.isfinite(s) for s in self.fine_stddev):
            raise ConfigError("Fine stddevs must be finite and >= 0")
        if self.group_size < 1:
            raise ConfigError(f"group_size must be >= 1, got {self.group_size}")
        num_classes = self.num_classes
        if sorted(set(self.fine_to_coarse)) != list(range(num_classes)):
            raise ConfigError("fine_to_coarse must map onto every class in [0, num_classes)")
        if self.class_names is not None and len(self.class_names) != num_classes:
            raise ConfigError(
                f"{len(self.class_names)} class names for {num_classes} classes")

    @property
    def num_classes(self) -> int:
        return max(self.fine_to_coarse) + 1

    @property
    def feature_dim(self) -> int:
        return int(self.fine_means[0].size)


def desk_generator_spec(seed: int = 0, d_in: int = DESK_D_IN,
                        spread: float = DESK_MEAN_SPREAD) -> GeneratorSpec:
    """
    Default desk-scale spec: three head clusters share class 0, three rare
    clusters are classes 1-3.

    Features are scaled so an instance's noise has expected norm 1
    whatever d_in is: fine stddev is 1/sqrt(d_in) and the means, drawn from
    a sub-stream of `seed`, have expected pairwise distance
    spread / sqrt(d_in). ||r||^2 stays near 1, which bounds the SGD step on
    the projector at the default lr and alpha.
    """
    if d_in < 1:
        raise ConfigError(f"d_in must be >= 1, got {d_in}")
    rng = SeededRng(seed).spawn(0)
    stddev = 1.0 / math.sqrt(d_in)
    scale = spread * stddev / math.sqrt(2.0 * d_in)
    means = [scale * rng.normal_array(d_in) for _ in DESK_FINE_COUNTS]
    return GeneratorSpec(
        fine_means=means,
        fine_stddev=[stddev] * len(DESK_FINE_COUNTS),
        fine_counts=list(DESK_FINE_COUNTS),
        fine_to_coarse=list(DESK_FINE_TO_COARSE),
        group_size=DESK_GROUP_SIZE,
        seed=seed,
    )


def generate_synthetic(spec: GeneratorSpec) -> Dataset:
    """
    Draw sum(fine_counts) instances.

    Instance features are fine_means[k] + fine_stddev[k] * eps with eps drawn
    from the seeded stream, cluster by cluster. Groups are assigned
    round-robin over ceil(count / group_size) pseudo-scenes.
    """
    rng = SeededRng(spec.seed)
    total = sum(spec.fine_counts)
    dim = spec.feature_dim
    features = np.empty((total, dim), dtype=np.float64)
    labels = np.empty(total, dtype=np.int64)
    fine = np.empty(total, dtype=np.int64)

    row = 0
    for k, (mean, std, count) in enumerate(
            zip(spec.fine_means, spec.fine_stddev, spec.fine_counts)):
        for _ in range(count):
            features[row] = mean + std * rng.normal_array(dim)
            labels[row] = spec.fine_to_coarse[k]
            fine[row] = k
            row += 1

    num_groups = max(1, math.ceil(total / spec.group_size))
    ids = np.arange(total, dtype=np.int64)
    dataset = Dataset(
        ids=ids,
        groups=ids % num_groups,
        labels=labels,
        features=features,
        num_classes=spec.num_classes,
        class_names=spec.class_names,
        fine=fine,
    )
    logger.info("Generated %d instances (%d classes, dim %d, %d groups)",
                total, spec.num_classes, dim, num_groups)
    return dataset


def split(dataset: Dataset, train_frac: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle, then prefix split into (train, test)."""
    if not (0.0 < train_frac < 1.0):
        raise ConfigError(f"train_frac must be in (0, 1), got {train_frac}")
    n = len(dataset)
    n_train = int(round(n * train_frac))
    if n_train < 1 or n_train >= n:
        raise ConfigError(
            f"train_frac {train_frac} leaves an empty side for {n} instances")
    order = SeededRng(seed).shuffle(range(n))
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


def class_summary(dataset: Dataset) -> Dict[int, int]:
    counts = dataset.class_counts()
    return {i: int(c) for i, c in enumerate(counts)}
