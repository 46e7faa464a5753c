"""
Core suite: PRNG, dense math primitives, finite differences, errors and file helpers.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from dpl.core.errors import (
    CheckpointError,
    ClassIndexError,
    ConfigError,
    DataFormatError,
    DegenerateInputError,
    DimensionError,
    DplError,
    FormatError,
    NumericError,
    TrainingAborted,
)
from dpl.core.files import atomic_open, load_json_file, save_json_file
from dpl.core.linalg import (
    as_matrix,
    as_vector,
    euclidean_distance,
    finite_diff_grad,
    l2_normalize,
    softmax,
)
from dpl.core.performance import last_metric, track
from dpl.core.rng import SeededRng, derive_seed, splitmix64


def test_rng_same_seed_same_stream():
    a, b = SeededRng(42), SeededRng(42)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]
    assert np.array_equal(SeededRng(7).normal_array((5, 3)), SeededRng(7).normal_array((5, 3)))


def test_rng_different_seeds_differ():
    assert SeededRng(1).next_u64() != SeededRng(2).next_u64()


def test_rng_outputs_are_64_bit():
    rng = SeededRng(0)
    assert all(0 <= rng.next_u64() < 2 ** 64 for _ in range(1000))


def test_splitmix64_is_deterministic():
    state, out = splitmix64(0)
    assert splitmix64(0) == (state, out)
    assert 0 <= out < 2 ** 64
    assert derive_seed(5, 1) != derive_seed(5, 2)


def test_rng_float_and_below_ranges():
    rng = SeededRng(3)
    floats = [rng.next_float() for _ in range(2000)]
    assert min(floats) >= 0.0 and max(floats) < 1.0
    draws = [rng.below(7) for _ in range(2000)]
    assert set(draws) == set(range(7))


def test_rng_normal_moments():
    draws = SeededRng(42).normal_array(100_000)
    assert abs(draws.mean()) <= 0.02
    assert abs(draws.var() - 1.0) <= 0.03


def test_rng_box_muller_pairs_are_consumed_in_order():
    paired = SeededRng(9)
    values = [paired.standard_normal() for _ in range(4)]
    assert np.array_equal(SeededRng(9).normal_array(4), np.array(values))


def test_rng_spawn_is_independent_of_parent_position():
    parent = SeededRng(11)
    first = parent.spawn(2).next_u64()
    parent.next_u64()
    assert parent.spawn(2).next_u64() == first
    assert parent.spawn(3).next_u64() != first


def test_rng_shuffle_is_a_permutation():
    order = SeededRng(4).shuffle(range(50))
    assert sorted(order) == list(range(50))
    assert order == SeededRng(4).shuffle(range(50))


def test_softmax_known_values():
    assert np.allclose(softmax(np.zeros(3)), [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    assert np.allclose(softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


def test_softmax_shift_invariance_and_sum():
    v = np.array([-700.0, 3.0, 699.0, 12.5])
    p = softmax(v)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)
    assert np.allclose(softmax(v + 123.0), p, atol=1e-15)


def test_softmax_empty_raises():
    with pytest.raises(DimensionError):
        softmax(np.array([]))


def test_euclidean_distance_and_mismatch():
    assert euclidean_distance([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5.0, abs=1e-15)
    with pytest.raises(DimensionError):
        euclidean_distance([1.0, 2.0], [1.0, 2.0, 3.0])


def test_triangle_inequality_on_random_triples():
    rng = SeededRng(5)
    for _ in range(200):
        u, v, w = (rng.normal_array(4) for _ in range(3))
        assert euclidean_distance(u, w) <= euclidean_distance(u, v) + euclidean_distance(v, w) + 1e-12


def test_l2_normalize():
    assert np.allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])
    with pytest.raises(DegenerateInputError):
        l2_normalize(np.zeros(3))


def test_finite_diff_grad_known_values():
    assert finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-9)
    grad = finite_diff_grad(lambda x: float(x[0] * x[1]), np.array([2.0, 3.0]))
    assert np.allclose(grad, [3.0, 2.0], atol=1e-9)


def test_finite_diff_grad_non_finite_raises():
    with pytest.raises(NumericError):
        finite_diff_grad(lambda x: float("nan"), np.array([1.0]))


def test_error_exit_codes():
    assert ConfigError("x").exit_code == 1
    assert DataFormatError("x").exit_code == 2
    assert CheckpointError("x").exit_code == 2
    assert DimensionError("x").exit_code == 3
    assert ClassIndexError("x").exit_code == 3
    assert TrainingAborted("x", step=4).exit_code == 3
    assert isinstance(ClassIndexError("x"), IndexError)
    assert issubclass(FormatError, DplError)


def test_format_error_names_path_and_row():
    message = str(DataFormatError("bad value", path="data.csv", row=7))
    assert "data.csv" in message and "7" in message


def test_atomic_open_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"
    with pytest.raises(RuntimeError):
        with atomic_open(target, "w") as f:
            f.write("partial")
            raise RuntimeError("boom")
    assert not target.exists()
    assert not (tmp_path / "out.txt.tmp").exists()


def test_json_helpers(tmp_path):
    path = tmp_path / "doc.json"
    save_json_file(path, {"b": 1, "a": [1.5, 2]})
    assert load_json_file(path) == {"a": [1.5, 2], "b": 1}
    with pytest.raises(FormatError):
        load_json_file(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_json_file(tmp_path / "broken.json", error_cls=CheckpointError)


def test_track_records_metric():
    with track("unit"):
        math.sqrt(2.0)
    metric = last_metric("unit")
    assert metric is not None
    assert metric.duration >= 0


def test_dense_constructors():
    assert as_vector([1, 2, 3]).dtype == np.float64
    assert as_matrix([1, 2, 3, 4, 5, 6], 2, 3)[1, 0] == 4.0
    with pytest.raises(DimensionError):
        as_matrix([1, 2, 3], 2, 2)
    with pytest.raises(DimensionError):
        as_vector(np.zeros((2, 2)))
    with pytest.raises(NumericError):
        as_vector([1.0, np.inf])


def test_rng_getstate_tracks_spare_normal():
    rng = SeededRng(12)
    state, spare = rng.getstate()
    assert len(state) == 4 and spare is None
    rng.standard_normal()
    assert rng.getstate()[1] is not None
