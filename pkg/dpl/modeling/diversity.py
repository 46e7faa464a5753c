"""
dpl/modeling/diversity.py

Semantic-region learning around prototypes:
  * Gaussian samples s = c_i + sigma_i * eps (reparameterised, eps retained)
  * sample matching loss: squared hinge on the nearest sample of the true class
  * orthogonal loss: mean |c_i . c_j| over ordered pairs i != j
  * per-class sample counts (uniform, log-frequency or explicit)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from dpl.core.errors import ConfigError, DplError
from dpl.core.rng import SeededRng
from dpl.modeling.model import ModelState, PrototypeBank, variance_of

DEFAULT_NUM_SAMPLES = 20
DEFAULT_RADIUS = 1.0


@dataclass(eq=False)
class SampleSet:
    """N samples around prototype `class_index`; row j = c_i + sigma_i * eps_j."""

    class_index: int
    samples: np.ndarray   # (N, d)
    epsilons: np.ndarray  # (N, d)
    sigma: np.ndarray     # (d,)

    @property
    def size(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss terms; total = ce + ortho + alpha * match."""

    ce: float
    ortho: float
    match: float
    total: float
    alpha: float = 10.0

    def as_dict(self) -> Dict[str, float]:
        return {"ce": self.ce, "ortho": self.ortho, "match": self.match, "total": self.total}


def draw_samples(model: ModelState, i: int, n: int, rng: Optional[SeededRng] = None,
                 epsilons: Optional[np.ndarray] = None) -> SampleSet:
    """
    Draw n samples around prototype i.

    Args:
        model: Model supplying c_i and f_sigma
        i: Class index
        n: Number of samples, >= 1
        rng: Stream for fresh eps draws (row-major, n x d)
        epsilons: Fixed eps of shape (n, d); replaces rng draws

    Raises:
        ConfigError: n < 1, or neither rng nor epsilons given
    """
    if n < 1:
        raise ConfigError(f"Number of samples must be >= 1, got {n}")
    sigma = np.sqrt(variance_of(model, i))
    d = model.d
    if epsilons is None:
        if rng is None:
            raise ConfigError("draw_samples needs an rng or fixed epsilons")
        epsilons = rng.normal_array((n, d))
    else:
        epsilons = np.asarray(epsilons, dtype=np.float64)
        if epsilons.shape != (n, d):
            raise ConfigError(f"epsilons shape {epsilons.shape}, expected {(n, d)}")
    samples = model.prototypes.C[i] + sigma * epsilons
    return SampleSet(class_index=i, samples=samples, epsilons=epsilons, sigma=sigma)


def nearest_sample(z: np.ndarray, sampleset: SampleSet) -> Tuple[int, float]:
    """(index, distance) of the sample closest to z; ties go to the lowest index."""
    dists = np.linalg.norm(sampleset.samples - z, axis=1)
    j = int(np.argmin(dists))
    return j, float(dists[j])


def matching_loss(batch: Sequence[Tuple[np.ndarray, int]],
                  samplesets: Mapping[int, SampleSet], R: float) -> float:
    """
    Mean over the batch of (max(0, min_j ||z - s_k^(j)|| - R))^2, k the true class.

    Raises:
        ConfigError: R <= 0 or empty batch
        DplError: No SampleSet for a labelled class
    """
    if R <= 0:
        raise ConfigError(f"R must be positive, got {R}")
    if len(batch) == 0:
        raise ConfigError("matching_loss of an empty batch")
    total = 0.0
    for z, label in batch:
        sampleset = samplesets.get(int(label))
        if sampleset is None:
            raise DplError(f"no SampleSet drawn for class {label}")
        _, dist = nearest_sample(np.asarray(z, dtype=np.float64), sampleset)
        total += max(0.0, dist - R) ** 2
    return total / len(batch)


def orthogonal_loss(prototypes: PrototypeBank | np.ndarray) -> float:
    """(1 / (|P|(|P|-1))) * sum over i != j of |c_i . c_j|."""
    C = prototypes.C if isinstance(prototypes, PrototypeBank) else np.asarray(prototypes)
    p = C.shape[0]
    if p < 2:
        raise ConfigError(f"orthogonal_loss needs at least 2 prototypes, got {p}")
    gram = np.abs(C @ C.T)
    np.fill_diagonal(gram, 0.0)
    return float(gram.sum() / (p * (p - 1)))


def sample_counts(num_classes: int, n: int, schedule: str = "uniform",
                  class_frequencies: Optional[Sequence[int]] = None,
                  n_per_class: Optional[Sequence[int]] = None) -> List[int]:
    """
    Samples to draw per class.

    uniform: n for every class.
    log_frequency: proportional to log(1 + freq), rescaled to average n,
        rounded and floored at 1 (head classes get more samples).
    n_per_class: explicit list, overrides the schedule.
    """
    if n_per_class is not None:
        counts = [int(k) for k in n_per_class]
        if len(counts) != num_classes or any(k < 1 for k in counts):
            raise ConfigError(
                f"n_per_class needs {num_classes} entries, each >= 1, got {list(n_per_class)}")
        return counts
    if n < 1:
        raise ConfigError(f"N must be >= 1, got {n}")
    if schedule == "uniform":
        return [n] * num_classes
    if schedule != "log_frequency":
        raise ConfigError(f"Unknown sample schedule: {schedule}")
    if class_frequencies is None or len(class_frequencies) != num_classes:
        raise ConfigError("log_frequency schedule needs one frequency per class")
    weights = np.log1p(np.asarray(class_frequencies, dtype=np.float64))
    if weights.sum() == 0.0:
        return [n] * num_classes
    scaled = weights * (n * num_classes / weights.sum())
    return [max(1, int(math.floor(x + 0.5))) for x in scaled]
