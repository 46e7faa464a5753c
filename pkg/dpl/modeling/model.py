"""
dpl/modeling/model.py

Learnable parameters and forward computations: the linear projector, the
unit-norm prototype bank, the variance network f_sigma and the scale scalars
(a, b) of the distance softmax.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from dpl.core.errors import ClassIndexError, ConfigError, DegenerateInputError, DimensionError
from dpl.core.linalg import softplus
from dpl.core.rng import SeededRng

DEFAULT_SIGMA2_FLOOR = 1e-3
PARAMETER_GROUPS = (
    "projector_weight",
    "projector_bias",
    "prototypes",
    "variance_w1",
    "variance_b1",
    "variance_w2",
    "variance_b2",
    "a",
    "b",
)


@dataclass(eq=False)
class ProjectorParams:
    weight: np.ndarray  # (d, d_in)
    bias: np.ndarray    # (d,)


@dataclass(eq=False)
class PrototypeBank:
    C: np.ndarray  # (|P|, d), unit-norm rows

    @property
    def num_classes(self) -> int:
        return int(self.C.shape[0])


@dataclass(eq=False)
class VarianceNet:
    """
    Two-layer MLP: softplus(w2 . relu(w1 . c + b1) + b2) + sigma2_floor.

    `fixed_variance` is a test hook: when set, every class reports that
    variance in every coordinate and the network is bypassed.
    """

    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (d, h)
    b2: np.ndarray  # (d,)
    sigma2_floor: float = DEFAULT_SIGMA2_FLOOR
    fixed_variance: Optional[float] = None

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])


@dataclass(eq=False)
class ScaleParams:
    a: np.ndarray  # 0-d
    b: np.ndarray  # 0-d


@dataclass(eq=False)
class ModelState:
    projector: ProjectorParams
    prototypes: PrototypeBank
    variance_net: VarianceNet
    scales: ScaleParams
    step: int = 0

    @property
    def dims(self) -> Tuple[int, int, int]:
        """(d_in, d, |P|)"""
        d, d_in = self.projector.weight.shape
        return int(d_in), int(d), self.prototypes.num_classes

    @property
    def d(self) -> int:
        return self.dims[1]

    @property
    def num_classes(self) -> int:
        return self.prototypes.num_classes

    @property
    def a(self) -> float:
        return float(self.scales.a)

    @property
    def b(self) -> float:
        return float(self.scales.b)

    def named_parameters(self) -> Dict[str, np.ndarray]:
        """Live parameter arrays keyed by group name (in-place updates stick)."""
        return {
            "projector_weight": self.projector.weight,
            "projector_bias": self.projector.bias,
            "prototypes": self.prototypes.C,
            "variance_w1": self.variance_net.w1,
            "variance_b1": self.variance_net.b1,
            "variance_w2": self.variance_net.w2,
            "variance_b2": self.variance_net.b2,
            "a": self.scales.a,
            "b": self.scales.b,
        }

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def same_parameters(self, other: "ModelState") -> bool:
        mine, theirs = self.named_parameters(), other.named_parameters()
        return (
            self.step == other.step
            and self.variance_net.sigma2_floor == other.variance_net.sigma2_floor
            and all(mine[k].shape == theirs[k].shape and np.array_equal(mine[k], theirs[k])
                    for k in PARAMETER_GROUPS)
        )


def init_model(d_in: int, d: int, num_classes: int, rng: SeededRng,
               hidden: Optional[int] = None,
               sigma2_floor: float = DEFAULT_SIGMA2_FLOOR) -> ModelState:
    """
    Initialise a model.

    Weights ~ N(0, 1/fan_in), biases zero, prototypes standard normal then
    row-normalised, a = 1, b = 0. Draw order: projector weight, prototypes,
    variance w1, variance w2.
    """
    hidden = d if hidden is None else hidden
    if min(d_in, d, num_classes, hidden) < 1:
        raise ConfigError(
            f"All dims must be >= 1 (d_in={d_in}, d={d}, num_classes={num_classes}, "
            f"hidden={hidden})")
    if sigma2_floor < 0:
        raise ConfigError(f"sigma2_floor must be >= 0, got {sigma2_floor}")

    proj_w = rng.normal_array((d, d_in)) / np.sqrt(d_in)
    raw = rng.normal_array((num_classes, d))
    while np.any(np.linalg.norm(raw, axis=1) == 0.0):
        raw = rng.normal_array((num_classes, d))
    w1 = rng.normal_array((hidden, d)) / np.sqrt(d)
    w2 = rng.normal_array((d, hidden)) / np.sqrt(hidden)

    model = ModelState(
        projector=ProjectorParams(weight=proj_w, bias=np.zeros(d)),
        prototypes=PrototypeBank(C=raw),
        variance_net=VarianceNet(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(d),
                                 sigma2_floor=sigma2_floor),
        scales=ScaleParams(a=np.array(1.0), b=np.array(0.0)),
        step=0,
    )
    return renormalize_prototypes(model)


def _check_dim(x: np.ndarray, expected: int, what: str) -> None:
    if x.shape[-1] != expected:
        raise DimensionError(f"{what} has dimension {x.shape[-1]}, expected {expected}")


def project(r: np.ndarray, model: ModelState) -> np.ndarray:
    """z = W r + bias; accepts one vector or a (batch, d_in) array."""
    r = np.asarray(r, dtype=np.float64)
    _check_dim(r, model.dims[0], "relation feature")
    return r @ model.projector.weight.T + model.projector.bias


def prototype_distances(z: np.ndarray, model: ModelState) -> np.ndarray:
    """||z - c_i|| for every class; shape (..., |P|)."""
    z = np.asarray(z, dtype=np.float64)
    _check_dim(z, model.d, "projected feature")
    diff = z[..., None, :] - model.prototypes.C
    return np.linalg.norm(diff, axis=-1)


def distance_logits(z: np.ndarray, model: ModelState) -> np.ndarray:
    """Entry i = -a ||z - c_i|| + b."""
    return -model.a * prototype_distances(z, model) + model.b


def _check_class(model: ModelState, i: int) -> None:
    if not (0 <= i < model.num_classes):
        raise ClassIndexError(f"class index {i} outside [0, {model.num_classes})")


def variance_forward(net: VarianceNet, c: np.ndarray) -> Dict[str, np.ndarray]:
    """Forward pass of f_sigma keeping intermediates for backprop."""
    pre_hidden = c @ net.w1.T + net.b1
    hidden = np.maximum(pre_hidden, 0.0)
    pre_out = hidden @ net.w2.T + net.b2
    variance = softplus(pre_out) + net.sigma2_floor
    return {"pre_hidden": pre_hidden, "hidden": hidden, "pre_out": pre_out,
            "variance": variance}


def variance_of(model: ModelState, i: int) -> np.ndarray:
    """sigma_i^2 = f_sigma(c_i), strictly positive in every coordinate."""
    _check_class(model, i)
    net = model.variance_net
    if net.fixed_variance is not None:
        return np.full(model.d, float(net.fixed_variance))
    return variance_forward(net, model.prototypes.C[i])["variance"]


def variance_all(model: ModelState) -> np.ndarray:
    """sigma^2 for every class, shape (|P|, d)."""
    net = model.variance_net
    if net.fixed_variance is not None:
        return np.full((model.num_classes, model.d), float(net.fixed_variance))
    return variance_forward(net, model.prototypes.C)["variance"]


def renormalize_prototypes(model: ModelState) -> ModelState:
    """Divide every prototype row by its norm (in place)."""
    C = model.prototypes.C
    norms = np.linalg.norm(C, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"prototype {int(zero[0])} collapsed to the zero vector")
    C /= norms[:, None]
    return model


def prototype_norm_deviation(model: ModelState) -> float:
    """max_i | ||c_i|| - 1 |"""
    return float(np.max(np.abs(np.linalg.norm(model.prototypes.C, axis=1) - 1.0)))
