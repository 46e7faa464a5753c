"""
dpl/modeling/objective.py

Training objective and its hand-derived gradients.

    L = L_ce + L_ortho + alpha * L_match      (batch means)

L_ce is cross-entropy over distance logits -a||z - c_i|| + b. L_match flows
through the reparameterised samples s = c + sigma * eps into f_sigma and,
unless detached, into the prototype mean. L_ortho uses the sign
subgradient of |c_i . c_j| (0 at exactly zero).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from dpl.core.errors import ClassIndexError, ConfigError, DimensionError, DplError
from dpl.core.linalg import log_softmax, sigmoid, softmax
from dpl.modeling.diversity import (
    LossBreakdown,
    SampleSet,
    matching_loss,
    orthogonal_loss,
)
from dpl.modeling.model import (
    PARAMETER_GROUPS,
    ModelState,
    distance_logits,
    project,
    variance_forward,
)

# Smoothing added to ||z - c|| in gradient denominators.
EPS_DIST = 1e-12


@dataclass(eq=False)
class GradientBuffer:
    """One gradient array per parameter group, shape-matched to ModelState."""

    projector_weight: np.ndarray
    projector_bias: np.ndarray
    prototypes: np.ndarray
    variance_w1: np.ndarray
    variance_b1: np.ndarray
    variance_w2: np.ndarray
    variance_b2: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros_like(cls, model: ModelState) -> "GradientBuffer":
        params = model.named_parameters()
        return cls(**{name: np.zeros_like(params[name], dtype=np.float64)
                      for name in PARAMETER_GROUPS})

    def named(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_GROUPS}

    def __iter__(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.named().items())

    def add_(self, other: "GradientBuffer", scale: float = 1.0) -> "GradientBuffer":
        for name in PARAMETER_GROUPS:
            setattr(self, name, getattr(self, name) + scale * getattr(other, name))
        return self

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for _, g in self)

    def first_non_finite(self) -> Optional[Tuple[str, float]]:
        """(group, max |g|) of the first group holding a non-finite entry."""
        for name, g in self:
            if not np.all(np.isfinite(g)):
                return name, float(np.max(np.abs(g)))
        return None


def _check_label(label: int, model: ModelState) -> None:
    if not (0 <= label < model.num_classes):
        raise ClassIndexError(f"label {label} outside [0, {model.num_classes})")


def ce_loss(z: np.ndarray, label: int, model: ModelState) -> float:
    """-log softmax(distance_logits(z))[label]"""
    _check_label(int(label), model)
    return float(-log_softmax(distance_logits(z, model))[int(label)])


def total_loss(ce: float, ortho: float, match: float, alpha: float) -> float:
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    return ce + ortho + alpha * match


def _as_batch(X: np.ndarray, y: np.ndarray, model: ModelState) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{X.shape[0]} features for {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise ConfigError("Empty batch")
    for label in y:
        _check_label(int(label), model)
    return X, y


# --- forward only --------------------------------------------------------

def batch_ce(X: np.ndarray, y: np.ndarray, model: ModelState) -> float:
    X, y = _as_batch(X, y, model)
    logp = log_softmax(distance_logits(project(X, model), model))
    return float(-np.mean(logp[np.arange(len(y)), y]))


def evaluate_loss(X: np.ndarray, y: np.ndarray, model: ModelState,
                  samplesets: Mapping[int, SampleSet], config) -> LossBreakdown:
    """Batch-mean loss terms, forward only."""
    X, y = _as_batch(X, y, model)
    ce = batch_ce(X, y, model)
    ortho = orthogonal_loss(model.prototypes) if config.use_ortho_loss else 0.0
    match = 0.0
    if config.use_match_loss:
        Z = project(X, model)
        match = matching_loss(list(zip(Z, y)), samplesets, config.R)
    return LossBreakdown(ce=ce, ortho=ortho, match=match,
                         total=total_loss(ce, ortho, match, config.alpha),
                         alpha=config.alpha)


# --- per-term forward + backward -----------------------------------------

def _projector_grads(grads: GradientBuffer, X: np.ndarray, dZ: np.ndarray) -> None:
    grads.projector_weight += dZ.T @ X
    grads.projector_bias += dZ.sum(axis=0)


def ce_backward(X: np.ndarray, y: np.ndarray, model: ModelState) -> Tuple[float, GradientBuffer]:
    """Batch-mean cross-entropy and its gradient."""
    X, y = _as_batch(X, y, model)
    grads = GradientBuffer.zeros_like(model)
    B = len(y)
    a = model.a
    Z = project(X, model)
    diff = Z[:, None, :] - model.prototypes.C          # (B, P, d)
    dist = np.linalg.norm(diff, axis=-1)               # (B, P)
    logits = -a * dist + model.b
    rows = np.arange(B)
    value = float(-np.mean(log_softmax(logits)[rows, y]))

    G = softmax(logits)
    G[rows, y] -= 1.0
    G /= B                                             # dL/dlogits
    grads.a = np.array(float(np.sum(-G * dist)))
    grads.b = np.array(float(np.sum(G)))
    gdiff = (-a * G / (dist + EPS_DIST))[..., None] * diff
    dZ = gdiff.sum(axis=1)
    grads.prototypes -= gdiff.sum(axis=0)
    _projector_grads(grads, X, dZ)
    return value, grads


def ortho_backward(model: ModelState) -> Tuple[float, GradientBuffer]:
    grads = GradientBuffer.zeros_like(model)
    C = model.prototypes.C
    p = C.shape[0]
    value = orthogonal_loss(model.prototypes)
    signs = np.sign(C @ C.T)
    np.fill_diagonal(signs, 0.0)
    grads.prototypes += (2.0 / (p * (p - 1))) * (signs @ C)
    return value, grads


def match_backward(X: np.ndarray, y: np.ndarray, model: ModelState,
                   samplesets: Mapping[int, SampleSet], R: float,
                   detach_prototype: bool = False) -> Tuple[float, GradientBuffer]:
    """
    Batch-mean matching loss and its gradient (without the alpha factor).

    The nearest sample's gradient splits into the prototype mean (skipped when
    `detach_prototype`) and sigma; sigma = sqrt(v), v = softplus(pre) + floor.
    """
    X, y = _as_batch(X, y, model)
    if R <= 0:
        raise ConfigError(f"R must be positive, got {R}")
    grads = GradientBuffer.zeros_like(model)
    B = len(y)
    Z = project(X, model)
    dZ = np.zeros_like(Z)
    d_mean: Dict[int, np.ndarray] = {}
    d_sigma: Dict[int, np.ndarray] = {}
    value = 0.0

    for n in range(B):
        k = int(y[n])
        sampleset = samplesets.get(k)
        if sampleset is None:
            raise DplError(f"no SampleSet drawn for class {k}")
        offsets = Z[n] - sampleset.samples
        dists = np.linalg.norm(offsets, axis=1)
        j = int(np.argmin(dists))
        hinge = dists[j] - R
        if hinge <= 0.0:
            continue
        value += hinge * hinge
        coef = 2.0 * hinge / B
        unit = offsets[j] / (dists[j] + EPS_DIST)
        dZ[n] += coef * unit
        d_sample = -coef * unit
        d_mean[k] = d_mean.get(k, 0.0) + d_sample
        d_sigma[k] = d_sigma.get(k, 0.0) + d_sample * sampleset.epsilons[j]

    value /= B
    _projector_grads(grads, X, dZ)

    if not detach_prototype:
        for k, g in d_mean.items():
            grads.prototypes[k] += g

    net = model.variance_net
    if net.fixed_variance is None:
        for k, g_sigma in d_sigma.items():
            c = model.prototypes.C[k]
            cache = variance_forward(net, c)
            sigma = np.sqrt(cache["variance"])
            d_pre_out = g_sigma / (2.0 * sigma) * sigmoid(cache["pre_out"])
            grads.variance_w2 += np.outer(d_pre_out, cache["hidden"])
            grads.variance_b2 += d_pre_out
            d_pre_hidden = (net.w2.T @ d_pre_out) * (cache["pre_hidden"] > 0.0)
            grads.variance_w1 += np.outer(d_pre_hidden, c)
            grads.variance_b1 += d_pre_hidden
            grads.prototypes[k] += net.w1.T @ d_pre_hidden
    return value, grads


def backward(X: np.ndarray, y: np.ndarray, model: ModelState,
             samplesets: Mapping[int, SampleSet], config) -> Tuple[LossBreakdown, GradientBuffer]:
    """
    Loss breakdown and exact gradients of the batch-mean total loss.

    Args:
        X: Raw features (B, d_in)
        y: Labels (B,)
        model: Current parameters
        samplesets: One SampleSet per class present in y, drawn this step
        config: Object with alpha, R, detach_prototype_in_sampling,
            use_match_loss, use_ortho_loss
    """
    ce, grads = ce_backward(X, y, model)
    ortho = 0.0
    if config.use_ortho_loss:
        ortho, g_ortho = ortho_backward(model)
        grads.add_(g_ortho)
    match = 0.0
    if config.use_match_loss:
        match, g_match = match_backward(X, y, model, samplesets, config.R,
                                        config.detach_prototype_in_sampling)
        grads.add_(g_match, scale=config.alpha)
    breakdown = LossBreakdown(ce=ce, ortho=ortho, match=match,
                              total=total_loss(ce, ortho, match, config.alpha),
                              alpha=config.alpha)
    return breakdown, grads
