"""
Shared pytest fixtures for the test suite.
"""
from __future__ import annotations

import numpy as np
import pytest

from dpl.config import RunConfig
from dpl.core.rng import SeededRng
from dpl.data.dataset import Dataset
from dpl.modeling.model import init_model

TINY_D_IN = 6
TINY_D = 4
TINY_CLASSES = 3


@pytest.fixture
def tiny_model():
    return init_model(TINY_D_IN, TINY_D, TINY_CLASSES, SeededRng(0))


@pytest.fixture
def tiny_dataset():
    rng = SeededRng(1)
    n = 30
    labels = np.array([0] * 20 + [1] * 7 + [2] * 3)
    centers = 0.4 * rng.normal_array((TINY_CLASSES, TINY_D_IN))
    features = centers[labels] + 0.04 * rng.normal_array((n, TINY_D_IN))
    return Dataset(ids=np.arange(n), groups=np.arange(n) % 5, labels=labels,
                   features=features, num_classes=TINY_CLASSES,
                   fine=labels.copy())


@pytest.fixture
def tiny_config():
    return RunConfig(d=TINY_D, N=3, steps=40, log_interval=10, seed=3, lr=0.02)


@pytest.fixture
def two_prototype_model():
    """d=2 model with c0=[1,0], c1=[0.5, sqrt(3)/2], a=1, b=0."""
    model = init_model(2, 2, 2, SeededRng(0))
    model.prototypes.C[...] = [[1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]]
    return model
