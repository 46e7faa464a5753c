"""
Model suite: initialisation, projection, distance logits, variance net and checkpoints.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from dpl.core.errors import CheckpointError, ClassIndexError, DegenerateInputError, DimensionError
from dpl.core.rng import SeededRng
from dpl.modeling.checkpoint import load_checkpoint, save_checkpoint
from dpl.modeling.model import (
    PARAMETER_GROUPS,
    distance_logits,
    init_model,
    project,
    prototype_distances,
    prototype_norm_deviation,
    renormalize_prototypes,
    variance_all,
    variance_of,
)


def test_init_model_is_deterministic():
    a = init_model(6, 4, 3, SeededRng(5))
    b = init_model(6, 4, 3, SeededRng(5))
    assert a.same_parameters(b)
    assert not a.same_parameters(init_model(6, 4, 3, SeededRng(6)))


def test_init_model_shapes_and_scales(tiny_model):
    assert tiny_model.dims == (6, 4, 3)
    assert tiny_model.a == 1.0 and tiny_model.b == 0.0
    assert tiny_model.step == 0
    assert prototype_norm_deviation(tiny_model) <= 1e-12
    assert set(tiny_model.named_parameters()) == set(PARAMETER_GROUPS)


def test_project_single_and_batch(tiny_model):
    r = np.arange(6, dtype=float)
    z = project(r, tiny_model)
    assert z.shape == (4,)
    batch = project(np.vstack([r, r]), tiny_model)
    assert np.allclose(batch[1], z)
    with pytest.raises(DimensionError):
        project(np.zeros(5), tiny_model)


def test_distance_logits_known_values(two_prototype_model):
    logits = distance_logits(np.array([1.0, 0.0]), two_prototype_model)
    assert np.allclose(logits, [0.0, -1.0], atol=1e-15)
    two_prototype_model.scales.a[...] = 2.0
    two_prototype_model.scales.b[...] = 0.5
    assert np.allclose(distance_logits(np.array([1.0, 0.0]), two_prototype_model), [0.5, -1.5])


def test_prototype_distances_reject_wrong_dim(tiny_model):
    with pytest.raises(DimensionError):
        prototype_distances(np.zeros(3), tiny_model)


def test_distance_logits_rotation_invariance(tiny_model):
    rng = SeededRng(8)
    q, _ = np.linalg.qr(rng.normal_array((4, 4)))
    rotated = tiny_model.copy()
    rotated.prototypes.C[...] = tiny_model.prototypes.C @ q.T
    for _ in range(20):
        z = rng.normal_array(4)
        assert np.allclose(distance_logits(z, tiny_model), distance_logits(q @ z, rotated),
                           atol=1e-9)


def test_variance_is_positive_and_floored(tiny_model):
    assert np.all(variance_all(tiny_model) > 0)
    net = tiny_model.variance_net
    for arr in (net.w1, net.b1, net.w2, net.b2):
        arr[...] = 0.0
    assert np.allclose(variance_of(tiny_model, 0), math.log(2.0) + 1e-3, atol=1e-12)
    net.b2[...] = -1000.0
    assert np.allclose(variance_of(tiny_model, 1), 1e-3, atol=1e-12)


def test_variance_rows_match_per_class(tiny_model):
    all_rows = variance_all(tiny_model)
    for i in range(3):
        assert np.allclose(all_rows[i], variance_of(tiny_model, i), atol=1e-15)


def test_variance_of_bad_class(tiny_model):
    with pytest.raises(ClassIndexError):
        variance_of(tiny_model, 3)
    with pytest.raises(ClassIndexError):
        variance_of(tiny_model, -1)


def test_renormalize_prototypes(tiny_model):
    tiny_model.prototypes.C *= 3.0
    renormalize_prototypes(tiny_model)
    assert prototype_norm_deviation(tiny_model) <= 1e-12
    tiny_model.prototypes.C[1] = 0.0
    with pytest.raises(DegenerateInputError):
        renormalize_prototypes(tiny_model)


def test_checkpoint_round_trip_is_exact(tmp_path, tiny_model):
    tiny_model.step = 17
    tiny_model.scales.a[...] = 1.0 / 3.0
    path = tmp_path / "model.json"
    save_checkpoint(tiny_model, path)
    loaded = load_checkpoint(path)
    assert loaded.same_parameters(tiny_model)
    save_checkpoint(loaded, tmp_path / "again.json")
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_checkpoint_expected_dims(tmp_path, tiny_model):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_model, path)
    assert load_checkpoint(path, expected_dims=(6, None, 3)).dims == (6, 4, 3)
    with pytest.raises(CheckpointError, match="Shape mismatch"):
        load_checkpoint(path, expected_dims=(6, 5, 3))


def test_checkpoint_shape_mismatch(tmp_path, tiny_model):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_model, path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["prototypes"] = doc["prototypes"][:2]
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(CheckpointError, match="prototypes"):
        load_checkpoint(path)


def test_checkpoint_missing_and_truncated(tmp_path, tiny_model):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.json")
    path = tmp_path / "model.json"
    save_checkpoint(tiny_model, path)
    text = path.read_text(encoding="utf-8")
    path.write_text(text[: len(text) // 2], encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_non_finite(tmp_path, tiny_model):
    tiny_model.projector.bias[0] = np.nan
    path = tmp_path / "model.json"
    save_checkpoint(tiny_model, path)
    with pytest.raises(CheckpointError, match="non-finite"):
        load_checkpoint(path)
