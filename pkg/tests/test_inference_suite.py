"""
Inference suite: biased/unbiased probabilities, a' scaling, prediction and embedding export.
"""

from __future__ import annotations

import csv

import numpy as np
import pytest

from dpl.core.errors import ConfigError, DimensionError
from dpl.core.rng import SeededRng
from dpl.modeling.model import init_model, variance_all
from dpl.services.evaluation import compare_modes, evaluate
from dpl.services.inference import (
    InferenceTrace,
    biased_probabilities,
    export_embeddings,
    infer,
    predict,
    unbiased_probabilities,
)


def _trace(probabilities):
    p = np.asarray(probabilities, dtype=float)
    return InferenceTrace(np.zeros_like(p), np.zeros_like(p), 1.0, np.log(p), p)


def test_biased_equidistant_is_uniform(two_prototype_model):
    z = np.array([0.75, np.sqrt(3.0) / 4.0])
    trace = biased_probabilities(z, two_prototype_model)
    assert np.allclose(trace.probabilities, [0.5, 0.5], atol=1e-12)
    assert trace.a_prime == two_prototype_model.a


def test_biased_temperature_limit(two_prototype_model):
    z = np.array([1.0, 0.0])
    previous = 0.0
    for a in (1.0, 5.0, 25.0):
        two_prototype_model.scales.a[...] = a
        p0 = biased_probabilities(z, two_prototype_model).probabilities[0]
        assert p0 > previous
        previous = p0
    assert previous > 1 - 1e-9


def test_biased_dimension_mismatch(tiny_model):
    with pytest.raises(DimensionError):
        biased_probabilities(np.zeros(5), tiny_model)


def test_unbiased_reduces_to_biased_at_unit_variance(tiny_model):
    tiny_model.variance_net.fixed_variance = 1.0
    rng = SeededRng(4)
    for _ in range(200):
        z = rng.normal_array(4)
        biased = biased_probabilities(z, tiny_model)
        unbiased = unbiased_probabilities(z, tiny_model)
        assert unbiased.a_prime == pytest.approx(tiny_model.a, abs=1e-12)
        assert np.allclose(biased.logits, unbiased.logits, atol=1e-9)
        assert predict(biased) == predict(unbiased)


def test_unbiased_elementwise_normalisation():
    model = init_model(2, 2, 2, SeededRng(0))
    model.prototypes.C[...] = [[1.0, 0.0], [0.0, 1.0]]
    model.variance_net.fixed_variance = 4.0
    trace = unbiased_probabilities(np.array([3.0, 0.0]), model)
    assert trace.raw_distances[0] == pytest.approx(2.0)
    assert trace.normalized_distances[0] == pytest.approx(1.0)
    assert trace.a_prime == pytest.approx(model.a * trace.raw_distances.max()
                                          / trace.normalized_distances.max())
    assert trace.a_prime == pytest.approx(2.0)


@pytest.mark.parametrize("kappa", [0.1, 10.0])
def test_unbiased_invariant_to_sigma_scale(tiny_model, kappa):
    variances = variance_all(tiny_model)
    rng = SeededRng(6)
    for _ in range(100):
        z = rng.normal_array(4)
        base = unbiased_probabilities(z, tiny_model, variances)
        scaled = unbiased_probabilities(z, tiny_model, variances * kappa ** 2)
        assert scaled.a_prime == pytest.approx(kappa * base.a_prime, rel=1e-9)
        assert np.allclose(base.logits, scaled.logits, atol=1e-9)


def test_unbiased_a_prime_positive(tiny_model):
    rng = SeededRng(7)
    assert all(unbiased_probabilities(rng.normal_array(4), tiny_model).a_prime > 0
               for _ in range(50))


def test_probabilities_sum_to_one(tiny_model):
    z = SeededRng(8).normal_array(4)
    for mode in ("biased", "unbiased"):
        assert abs(infer(z, tiny_model, mode).probabilities.sum() - 1.0) <= 1e-12
    with pytest.raises(ConfigError):
        infer(z, tiny_model, "calibrated")


@pytest.mark.parametrize("probabilities, expected", [
    ([0.1, 0.7, 0.2], 1),
    ([0.5, 0.5], 0),
    ([0.0, 0.0, 1.0], 2),
])
def test_predict(probabilities, expected):
    assert predict(_trace(probabilities)) == expected


def test_export_embeddings(tmp_path, tiny_model, tiny_dataset):
    path = tmp_path / "emb.csv"
    export_embeddings(tiny_model, tiny_dataset, path, samples_per_prototype=2, seed=5)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    assert header[:5] == ["kind", "class", "label", "pred_biased", "pred_unbiased"]
    assert len(header) == 5 + 2 * 4
    kinds = [row[0] for row in body]
    assert kinds.count("prototype") == 3
    assert kinds.count("feature") == len(tiny_dataset)
    assert kinds.count("sample") == 6
    assert all(row[-1] == "" for row in body if row[0] != "prototype")

    again = tmp_path / "again.csv"
    export_embeddings(tiny_model, tiny_dataset, again, samples_per_prototype=2, seed=5)
    assert path.read_bytes() == again.read_bytes()


def test_compare_modes_identical_at_unit_variance(tiny_model, tiny_dataset):
    tiny_model.variance_net.fixed_variance = 1.0
    tiny_model.projector.weight[...] = SeededRng(3).normal_array((4, 6))
    biased, unbiased, doc = compare_modes(tiny_model, tiny_dataset, topk=[2])
    assert np.array_equal(biased.confusion.counts, unbiased.confusion.counts)
    assert doc.mean_recall_delta == 0.0
    assert doc.biased.confusion == doc.unbiased.confusion


def test_evaluate_populates_all_fields(tiny_model, tiny_dataset):
    report = evaluate(tiny_model, tiny_dataset, "unbiased", topk=[1, 100])
    doc = report.to_document()
    assert doc.mode == "unbiased"
    assert set(doc.recall_at_k) == {"1", "100"}
    assert doc.fine_recall is not None
    assert report.confusion.total == len(tiny_dataset)


def test_evaluate_rejects_incompatible_dataset(tiny_dataset):
    model = init_model(5, 4, 3, SeededRng(0))
    with pytest.raises(ConfigError):
        evaluate(model, tiny_dataset, "biased")
