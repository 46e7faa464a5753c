"""
dpl/services/inference.py

Biased and unbiased class probabilities.

Biased:    softmax(-a ||z - c_j|| + b)
Unbiased:  softmax(-a' ||(z - c_j) / sigma_j|| + b),
           a' = a * max_j ||z - c_j|| / max_j ||(z - c_j) / sigma_j||
with sigma_j = sqrt(f_sigma(c_j)) and a' computed per query.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np

from dpl.core.errors import ConfigError, DegenerateInputError
from dpl.core.files import PathLike, atomic_open
from dpl.core.linalg import softmax
from dpl.core.rng import SeededRng
from dpl.data.dataset import Dataset
from dpl.modeling.diversity import draw_samples
from dpl.modeling.model import ModelState, project, prototype_distances, variance_all

logger = logging.getLogger(__name__)

Mode = Literal["biased", "unbiased"]
MODES = ("biased", "unbiased")


@dataclass(eq=False)
class InferenceTrace:
    raw_distances: np.ndarray
    normalized_distances: np.ndarray
    a_prime: float
    logits: np.ndarray
    probabilities: np.ndarray


def biased_probabilities(z: np.ndarray, model: ModelState) -> InferenceTrace:
    raw = prototype_distances(z, model)
    logits = -model.a * raw + model.b
    return InferenceTrace(raw_distances=raw, normalized_distances=raw.copy(),
                          a_prime=model.a, logits=logits, probabilities=softmax(logits))


def unbiased_probabilities(z: np.ndarray, model: ModelState,
                           variances: Optional[np.ndarray] = None) -> InferenceTrace:
    """
    Variance-normalised prediction for one query.

    Args:
        z: Projected feature (d,)
        model: Trained model
        variances: Precomputed variance_all(model), to share across queries

    Raises:
        DegenerateInputError: z coincides with every prototype
    """
    raw = prototype_distances(z, model)
    sigma = np.sqrt(variance_all(model) if variances is None else variances)
    normalized = np.linalg.norm((np.asarray(z, dtype=np.float64) - model.prototypes.C) / sigma,
                                axis=1)
    max_raw = float(np.max(raw))
    max_norm = float(np.max(normalized))
    if max_raw == 0.0 or max_norm == 0.0:
        raise DegenerateInputError("query coincides with every prototype")
    a_prime = model.a * max_raw / max_norm
    logits = -a_prime * normalized + model.b
    return InferenceTrace(raw_distances=raw, normalized_distances=normalized,
                          a_prime=a_prime, logits=logits, probabilities=softmax(logits))


def predict(trace: InferenceTrace) -> int:
    """Argmax of the probabilities; ties go to the lowest class index."""
    return int(np.argmax(trace.probabilities))


def infer(z: np.ndarray, model: ModelState, mode: Mode,
          variances: Optional[np.ndarray] = None) -> InferenceTrace:
    if mode == "biased":
        return biased_probabilities(z, model)
    if mode == "unbiased":
        return unbiased_probabilities(z, model, variances)
    raise ConfigError(f"Unknown inference mode: {mode}. Choose from {MODES}")


def infer_dataset(model: ModelState, dataset: Dataset, mode: Mode) -> List[InferenceTrace]:
    """One trace per instance, in dataset order."""
    Z = project(dataset.features, model)
    variances = variance_all(model) if mode == "unbiased" else None
    return [infer(z, model, mode, variances) for z in Z]


def export_embeddings(model: ModelState, dataset: Dataset, path: PathLike,
                      samples_per_prototype: int = 0, seed: int = 0) -> None:
    """
    Write prototypes, projected features and optional samples as CSV.

    Header: kind,class,label,pred_biased,pred_unbiased,v0..v{d-1},s0..s{d-1}.
    sigma columns are filled only for prototype rows. Sample rows for class i
    are drawn from sub-stream i of `seed`.
    """
    if samples_per_prototype < 0:
        raise ConfigError(f"samples_per_prototype must be >= 0, got {samples_per_prototype}")
    d = model.d
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    blank_sigma = [""] * d
    sigma = np.sqrt(variance_all(model))
    Z = project(dataset.features, model)
    biased = infer_dataset(model, dataset, "biased")
    unbiased = infer_dataset(model, dataset, "unbiased")
    master = SeededRng(seed)

    header = (["kind", "class", "label", "pred_biased", "pred_unbiased"]
              + [f"v{j}" for j in range(d)] + [f"s{j}" for j in range(d)])
    with atomic_open(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i in range(model.num_classes):
            writer.writerow(["prototype", i, "", "", ""]
                            + [fmt(x) for x in model.prototypes.C[i]]
                            + [fmt(x) for x in sigma[i]])
        for n in range(len(dataset)):
            writer.writerow(["feature", "", int(dataset.labels[n]),
                             predict(biased[n]), predict(unbiased[n])]
                            + [fmt(x) for x in Z[n]] + blank_sigma)
        if samples_per_prototype:
            for i in range(model.num_classes):
                sampleset = draw_samples(model, i, samples_per_prototype, master.spawn(i))
                for row in sampleset.samples:
                    writer.writerow(["sample", i, "", "", ""]
                                    + [fmt(x) for x in row] + blank_sigma)
    logger.info("Exported %d prototypes, %d features, %d samples to %s",
                model.num_classes, len(dataset), model.num_classes * samples_per_prototype, path)
