"""
dpl/services/verification.py

Built-in analytic-identity checks run by `verify`.
Each check returns a status dict like the health checks: {"status", "msg"}.
"""
from __future__ import annotations

import logging
import math
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from dpl.api.schemas import MetricsDocument
from dpl.config import RunConfig
from dpl.core.linalg import euclidean_distance, finite_diff_grad, l2_normalize, softmax
from dpl.core.rng import SeededRng
from dpl.data.dataset import Dataset
from dpl.data.synthetic import desk_generator_spec, generate_synthetic
from dpl.modeling.diversity import SampleSet, matching_loss, orthogonal_loss
from dpl.modeling.model import (
    ModelState,
    distance_logits,
    init_model,
    variance_all,
    variance_of,
)
from dpl.modeling.objective import ce_loss, total_loss
from dpl.services.gradcheck import all_passed, run_grad_check
from dpl.services.inference import (
    InferenceTrace,
    biased_probabilities,
    predict,
    unbiased_probabilities,
)
from dpl.services.metrics import (
    MetricsReport,
    confusion_matrix,
    harmonic_mean,
    metrics_report,
    recall_at_k_grouped,
)
from dpl.services.trainer import train

logger = logging.getLogger(__name__)

QUERIES = 1000
LOGIT_TOLERANCE = 1e-9
CONSTRAINT_STEPS = 1000


def _ok(msg, **extra):
    return {"status": "ok", "msg": msg, **extra}


def _fail(msg, **extra):
    return {"status": "fail", "msg": msg, **extra}


def _expect(condition: bool, ok_msg: str, fail_msg: str) -> Dict[str, Any]:
    return _ok(ok_msg) if condition else _fail(fail_msg)


def _model_with_prototypes(C, d_in: int | None = None) -> ModelState:
    C = np.asarray(C, dtype=np.float64)
    p, d = C.shape
    model = init_model(d_in or d, d, p, SeededRng(0))
    model.prototypes.C[...] = C
    return model


def _random_model(seed: int = 11, d_in: int = 12, d: int = 6, p: int = 4) -> ModelState:
    model = init_model(d_in, d, p, SeededRng(seed))
    rng = SeededRng(seed).spawn(9)
    model.variance_net.b2[:] = rng.normal_array(d)
    model.scales.a[...] = 2.0
    return model


# --- core math -----------------------------------------------------------

def check_softmax() -> Dict[str, Any]:
    rng = SeededRng(1)
    worst = 0.0
    for _ in range(200):
        v = np.clip(300.0 * rng.normal_array(8), -700.0, 700.0)
        worst = max(worst, abs(float(softmax(v).sum()) - 1.0))
        shifted = softmax(v + 5.0)
        worst = max(worst, float(np.max(np.abs(shifted - softmax(v)))))
    known = (np.allclose(softmax(np.zeros(3)), [1 / 3] * 3, atol=1e-15)
                and np.allclose(softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6],
                                atol=1e-15))
    return _expect(worst <= 1e-12 and known, f"softmax sums/shift ok (worst {worst:.1e})",
                   f"softmax deviation {worst:.1e}")


def check_distance() -> Dict[str, Any]:
    rng = SeededRng(2)
    violations = 0
    for _ in range(500):
        u, v, w = (rng.normal_array(5) for _ in range(3))
        if euclidean_distance(u, w) > euclidean_distance(u, v) + euclidean_distance(v, w) + 1e-12:
            violations += 1
    known = (abs(euclidean_distance([3.0, 4.0], [0.0, 0.0]) - 5.0) < 1e-15
                and np.allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8]))
    return _expect(violations == 0 and known, "triangle inequality and norms ok",
                   f"{violations} triangle violations")


def check_finite_differences() -> Dict[str, Any]:
    square = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
    bilinear = finite_diff_grad(lambda x: float(x[0] * x[1]), np.array([2.0, 3.0]), 1e-5)
    ok = abs(square[0] - 6.0) < 1e-9 and np.allclose(bilinear, [3.0, 2.0], atol=1e-9)
    return _expect(ok, "central differences exact on quadratics", "finite-difference oracle off")


def check_rng() -> Dict[str, Any]:
    a, b = SeededRng(42), SeededRng(42)
    same = all(a.next_u64() == b.next_u64() for _ in range(1000))
    draws = SeededRng(42).normal_array(100_000)
    mean, var = float(draws.mean()), float(draws.var())
    ok = same and abs(mean) <= 0.02 and abs(var - 1.0) <= 0.03
    return _expect(ok, f"rng deterministic, mean {mean:+.4f}, var {var:.4f}",
                   f"rng off: same={same}, mean={mean}, var={var}")


# --- losses --------------------------------------------------------------

def check_loss_values() -> Dict[str, Any]:
    c1 = np.array([0.5, math.sqrt(3.0) / 2.0])
    two = _model_with_prototypes([[1.0, 0.0], c1])
    ce = ce_loss(np.array([1.0, 0.0]), 0, two)
    four = _model_with_prototypes([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    uniform = ce_loss(np.zeros(4), 2, four)

    ortho_zero = orthogonal_loss(np.eye(3))
    ortho_one = orthogonal_loss(np.array([[1.0, 0.0], [1.0, 0.0]]))
    gram_half = np.array([[1.0, 0.0, 0.0], [0.5, math.sqrt(3) / 2, 0.0],
                          [0.5, math.sqrt(3) / 6, math.sqrt(2.0 / 3.0)]])
    ortho_half = orthogonal_loss(gram_half)

    def single(distance: float) -> float:
        sampleset = SampleSet(0, np.array([[distance, 0.0]]), np.zeros((1, 2)), np.ones(2))
        return matching_loss([(np.zeros(2), 0)], {0: sampleset}, 1.0)

    sets = {0: SampleSet(0, np.array([[0.5, 0.0], [1.3, 0.0]]), np.zeros((2, 2)), np.ones(2))}
    pair = matching_loss([(np.zeros(2), 0), (np.array([-1.3, 0.0]), 0)],
                         {0: SampleSet(0, np.array([[0.0, 0.0]]), np.zeros((1, 2)), np.ones(2))},
                         1.0)
    checks = [
        abs(ce - 0.3132617) <= 1e-6,
        abs(uniform - math.log(4.0)) <= 1e-9,
        abs(ortho_zero) <= 1e-9,
        abs(ortho_one - 1.0) <= 1e-9,
        abs(ortho_half - 0.5) <= 1e-9,
        abs(single(0.5)) <= 1e-9,
        abs(single(2.0) - 1.0) <= 1e-9,
        abs(single(1.3) - 0.09) <= 1e-9,
        abs(pair - 0.045) <= 1e-9,
        abs(matching_loss([(np.zeros(2), 0)], sets, 1.0)) <= 1e-9,
        abs(total_loss(1.0, 0.5, 0.2, 10.0) - 3.5) <= 1e-12,
    ]
    return _expect(all(checks), f"known loss values reproduce (ce={ce:.7f})",
                   f"known loss values failed: {checks}")


def check_ce_shift_invariance() -> Dict[str, Any]:
    model = _random_model()
    rng = SeededRng(3)
    worst = 0.0
    for _ in range(100):
        z = rng.normal_array(model.d)
        label = rng.below(model.num_classes)
        before = ce_loss(z, label, model)
        model.scales.b[...] = float(model.scales.b) + 7.5
        after = ce_loss(z, label, model)
        model.scales.b[...] = float(model.scales.b) - 7.5
        worst = max(worst, abs(before - after))
    return _expect(worst <= 1e-12, f"ce invariant under b shifts ({worst:.1e})",
                   f"ce changed by {worst:.1e} under b shift")


def check_gradients() -> Dict[str, Any]:
    results = run_grad_check(seed=7)
    worst = max(r.rel_error for r in results if not r.zero)
    return _expect(all_passed(results), f"analytic gradients match (worst {worst:.1e})",
                   f"gradient check failed (worst {worst:.1e})")


# --- model ---------------------------------------------------------------

def check_variance_floor() -> Dict[str, Any]:
    model = _random_model()
    net = model.variance_net
    for arr in (net.w1, net.b1, net.w2, net.b2):
        arr[...] = 0.0
    zero_value = variance_of(model, 0)
    net.b2[...] = -800.0
    floor_value = variance_of(model, 0)
    ok = (np.allclose(zero_value, math.log(2.0) + 1e-3, atol=1e-12)
          and np.all(floor_value > 0) and np.allclose(floor_value, 1e-3, atol=1e-12))
    return _expect(ok, "variance floor and softplus(0) ok", "variance net output wrong")


def check_rotation_invariance() -> Dict[str, Any]:
    model = _random_model()
    rng = SeededRng(4)
    q, _ = np.linalg.qr(rng.normal_array((model.d, model.d)))
    worst = 0.0
    for _ in range(100):
        z = rng.normal_array(model.d)
        before = distance_logits(z, model)
        rotated = model.copy()
        rotated.prototypes.C[...] = model.prototypes.C @ q.T
        after = distance_logits(q @ z, rotated)
        worst = max(worst, float(np.max(np.abs(before - after))))
    return _expect(worst <= LOGIT_TOLERANCE, f"distance logits rotation invariant ({worst:.1e})",
                   f"rotation changed logits by {worst:.1e}")


def check_prototype_constraint(steps: int = CONSTRAINT_STEPS) -> Dict[str, Any]:
    """Unit prototype norms after every step of a desk-scale run."""
    dataset = generate_synthetic(desk_generator_spec(seed=1))
    config = RunConfig.preset("desk", steps=steps, log_interval=1, seed=1)
    _, history = train(config, dataset)
    worst = history.max_norm_deviation()
    if len(history.records) != steps:
        return _fail(f"expected {steps} norm records, got {len(history.records)}")
    return _expect(worst <= 1e-9, f"prototype norms within {worst:.1e} of 1",
                   f"prototype norm deviation {worst:.1e}")


# --- inference -----------------------------------------------------------

def _queries(model: ModelState, seed: int) -> List[np.ndarray]:
    rng = SeededRng(seed)
    return [rng.normal_array(model.d) for _ in range(QUERIES)]


def check_reduction_identity() -> Dict[str, Any]:
    model = _random_model()
    model.variance_net.fixed_variance = 1.0
    worst, mismatches = 0.0, 0
    for z in _queries(model, 6):
        biased = biased_probabilities(z, model)
        unbiased = unbiased_probabilities(z, model)
        worst = max(worst, float(np.max(np.abs(biased.logits - unbiased.logits))))
        mismatches += predict(biased) != predict(unbiased)
    return _expect(worst <= LOGIT_TOLERANCE and mismatches == 0,
                   f"unbiased == biased at unit variance ({worst:.1e})",
                   f"reduction broken: {worst:.1e}, {mismatches} argmax mismatches")


def check_sigma_scaling() -> Dict[str, Any]:
    model = _random_model()
    variances = variance_all(model)
    worst, mismatches = 0.0, 0
    for kappa in (0.1, 10.0):
        for z in _queries(model, 7):
            base = unbiased_probabilities(z, model, variances)
            scaled = unbiased_probabilities(z, model, variances * kappa ** 2)
            worst = max(worst, float(np.max(np.abs(base.logits - scaled.logits))))
            mismatches += predict(base) != predict(scaled)
    return _expect(worst <= LOGIT_TOLERANCE and mismatches == 0,
                   f"sigma scaling leaves logits unchanged ({worst:.1e})",
                   f"sigma scaling changed logits by {worst:.1e}, {mismatches} argmax flips")


def check_a_prime() -> Dict[str, Any]:
    model = _random_model()
    values = [unbiased_probabilities(z, model).a_prime for z in _queries(model, 8)[:100]]
    return _expect(all(v > 0 for v in values), f"a' positive (min {min(values):.3g})",
                   "a' not positive")


# --- metrics -------------------------------------------------------------

def check_metrics() -> Dict[str, Any]:
    rng = SeededRng(9)
    ok = True
    for _ in range(200):
        x, y = rng.next_float(), rng.next_float()
        f = harmonic_mean(x, y)
        ok &= f <= (x + y) / 2 + 1e-15 and f <= math.sqrt(x * y) + 1e-15
    ok &= abs(harmonic_mean(0.4, 0.4) - 0.4) < 1e-15

    report = metrics_report(confusion_matrix([0] * 100, [0] * 90 + [1] * 10, 2), "biased")
    ok &= abs(report.micro_recall - 0.9) < 1e-12 and abs(report.mean_recall - 0.5) < 1e-12
    ok &= abs(report.harmonic_f - 2 * 0.9 * 0.5 / 1.4) < 1e-12

    doc = report.to_document()
    again = MetricsDocument.model_validate_json(doc.model_dump_json())
    ok &= again == doc and MetricsReport.from_document(again).to_document() == doc
    return _expect(bool(ok), "metric identities and JSON round trip ok", "metric identity failed")


def check_grouped_recall() -> Dict[str, Any]:
    rng = SeededRng(10)
    n, p = 40, 3
    labels = np.array([rng.below(p) for _ in range(n)])
    groups = np.arange(n) % 4
    dataset = Dataset(ids=np.arange(n), groups=groups, labels=labels,
                      features=np.zeros((n, 1)), num_classes=p)
    traces = []
    for _ in range(n):
        probs = softmax(rng.normal_array(p))
        traces.append(InferenceTrace(np.zeros(p), np.zeros(p), 1.0, np.log(probs), probs))
    preds = np.array([predict(t) for t in traces])
    per_group = [float(np.mean(preds[groups == g] == labels[groups == g])) for g in range(4)]
    value = recall_at_k_grouped(dataset, traces, K=n)
    return _expect(abs(value - float(np.mean(per_group))) <= 1e-15,
                   "grouped recall with large K equals per-group recall",
                   f"grouped recall {value} != {np.mean(per_group)}")


CHECKS: Tuple[Tuple[str, Callable[[], Dict[str, Any]]], ...] = (
    ("softmax", check_softmax),
    ("distance", check_distance),
    ("finite_differences", check_finite_differences),
    ("rng", check_rng),
    ("loss_values", check_loss_values),
    ("ce_shift_invariance", check_ce_shift_invariance),
    ("gradients", check_gradients),
    ("variance_floor", check_variance_floor),
    ("rotation_invariance", check_rotation_invariance),
    ("prototype_constraint", check_prototype_constraint),
    ("reduction_identity", check_reduction_identity),
    ("sigma_scaling", check_sigma_scaling),
    ("a_prime", check_a_prime),
    ("metrics", check_metrics),
    ("grouped_recall", check_grouped_recall),
)


def run_verification() -> Dict[str, Dict[str, Any]]:
    """Run every check; exceptions count as failures."""
    results: Dict[str, Dict[str, Any]] = {}
    for name, check in CHECKS:
        try:
            results[name] = check()
        except Exception as e:
            logger.exception("check %s raised", name)
            results[name] = _fail(f"raised {type(e).__name__}: {e}")
    return results
