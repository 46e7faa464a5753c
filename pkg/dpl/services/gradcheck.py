"""
dpl/services/gradcheck.py

Finite-difference verification of every analytic gradient.

The seeded check instance: d_in=16, d=8, |P|=5, batch=16, N=4, fixed eps.
Each loss term (L_ce, L_ortho, alpha * L_match) and the total is checked for
every parameter group with central differences at h=1e-5. The relative error
of a group is ||g_a - g_fd|| / max(1e-8, ||g_a|| + ||g_fd||), with L2 norms
taken over the whole group: a single bad element is diluted by the size of
its group, unlike a per-element maximum. A group whose analytic and numeric
gradients both stay below ZERO_TOLERANCE (max |g|, per element) has no
dependence on that term and passes as "zero".
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from dpl.core.linalg import finite_diff_grad
from dpl.core.rng import SeededRng
from dpl.modeling.diversity import draw_samples, matching_loss, orthogonal_loss
from dpl.modeling.model import PARAMETER_GROUPS, ModelState, init_model, project
from dpl.modeling.objective import (
    GradientBuffer,
    backward,
    batch_ce,
    ce_backward,
    evaluate_loss,
    match_backward,
    ortho_backward,
)

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4  # on the group-norm relative error
STEP = 1e-5
ZERO_TOLERANCE = 1e-7  # on max |g| over the group
COMPONENTS = ("ce", "ortho", "match", "total")


@dataclass(frozen=True)
class CheckSettings:
    alpha: float = 10.0
    R: float = 1.0
    detach_prototype_in_sampling: bool = False
    use_match_loss: bool = True
    use_ortho_loss: bool = True


@dataclass(frozen=True)
class GradCheckResult:
    component: str
    group: str
    rel_error: float
    analytic_norm: float
    numeric_norm: float
    zero: bool

    @property
    def passed(self) -> bool:
        return self.zero or self.rel_error <= TOLERANCE


@dataclass(eq=False)
class CheckInstance:
    model: ModelState
    X: np.ndarray
    y: np.ndarray
    epsilons: Dict[int, np.ndarray]
    settings: CheckSettings

    def samplesets(self):
        return {k: draw_samples(self.model, k, eps.shape[0], epsilons=eps)
                for k, eps in self.epsilons.items()}


def build_check_instance(seed: int = 0, d_in: int = 16, d: int = 8, num_classes: int = 5,
                         batch: int = 16, n: int = 4,
                         settings: CheckSettings = CheckSettings()) -> CheckInstance:
    """Seeded model with non-trivial biases/scales, a batch covering every class, fixed eps."""
    rng = SeededRng(seed)
    model = init_model(d_in, d, num_classes, rng.spawn(0))
    extra = rng.spawn(1)
    model.projector.bias[:] = 0.1 * extra.normal_array(d)
    model.variance_net.b1[:] = 0.1 * extra.normal_array(model.variance_net.hidden)
    model.variance_net.b2[:] = 0.1 * extra.normal_array(d)
    model.scales.a[...] = 1.5
    model.scales.b[...] = 0.25
    X = rng.spawn(2).normal_array((batch, d_in))
    y = np.arange(batch) % num_classes
    eps_rng = rng.spawn(3)
    epsilons = {k: eps_rng.normal_array((n, d)) for k in range(num_classes)}
    return CheckInstance(model=model, X=X, y=y, epsilons=epsilons, settings=settings)


def _component_value(inst: CheckInstance, component: str) -> float:
    model, s = inst.model, inst.settings
    if component == "ce":
        return batch_ce(inst.X, inst.y, model)
    if component == "ortho":
        return orthogonal_loss(model.prototypes)
    if component == "match":
        Z = project(inst.X, model)
        return s.alpha * matching_loss(list(zip(Z, inst.y)), inst.samplesets(), s.R)
    return evaluate_loss(inst.X, inst.y, model, inst.samplesets(), s).total


def _component_grads(inst: CheckInstance, component: str) -> GradientBuffer:
    model, s = inst.model, inst.settings
    if component == "ce":
        return ce_backward(inst.X, inst.y, model)[1]
    if component == "ortho":
        return ortho_backward(model)[1]
    if component == "match":
        _, grads = match_backward(inst.X, inst.y, model, inst.samplesets(), s.R,
                                  s.detach_prototype_in_sampling)
        return GradientBuffer.zeros_like(model).add_(grads, scale=s.alpha)
    return backward(inst.X, inst.y, model, inst.samplesets(), s)[1]


def _numeric_grad(inst: CheckInstance, component: str, group: str, h: float) -> np.ndarray:
    param = inst.model.named_parameters()[group]
    original = param.copy()

    def f(values: np.ndarray) -> float:
        param[...] = values
        return _component_value(inst, component)

    try:
        return finite_diff_grad(f, original, h)
    finally:
        param[...] = original


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = float(np.linalg.norm(analytic - numeric))
    den = max(1e-8, float(np.linalg.norm(analytic) + np.linalg.norm(numeric)))
    return num / den


def run_grad_check(seed: int = 0, h: float = STEP,
                   components=COMPONENTS, instance: CheckInstance | None = None
                   ) -> List[GradCheckResult]:
    """Compare analytic and central-difference gradients for every term and group."""
    inst = instance or build_check_instance(seed)
    results: List[GradCheckResult] = []
    for component in components:
        analytic = _component_grads(inst, component).named()
        for group in PARAMETER_GROUPS:
            numeric = _numeric_grad(inst, component, group, h)
            a_max = float(np.max(np.abs(analytic[group])))
            n_max = float(np.max(np.abs(numeric)))
            result = GradCheckResult(
                component=component,
                group=group,
                rel_error=relative_error(analytic[group], numeric),
                analytic_norm=float(np.linalg.norm(analytic[group])),
                numeric_norm=float(np.linalg.norm(numeric)),
                zero=max(a_max, n_max) <= ZERO_TOLERANCE,
            )
            results.append(result)
            if not result.passed:
                logger.warning("gradient mismatch: %s/%s rel_error=%.3e",
                               component, group, result.rel_error)
    return results


def all_passed(results: List[GradCheckResult]) -> bool:
    return all(r.passed for r in results)


def format_results(results: List[GradCheckResult]) -> str:
    lines = [f"{'term':6s} {'group':18s} {'rel_error':>11s} {'|g|':>11s}  status"]
    for r in results:
        status = "zero" if r.zero else ("ok" if r.passed else "FAIL")
        lines.append(f"{r.component:6s} {r.group:18s} {r.rel_error:11.3e} "
                     f"{r.analytic_norm:11.3e}  {status}")
    return "\n".join(lines)


