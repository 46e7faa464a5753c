"""
Data suite: datasets, synthetic generator, split, CSV/DPLF formats and sidecars.
"""

from __future__ import annotations

import logging
import struct

import numpy as np
import pytest

from dpl.api.schemas import GeneratorSpecDocument
from dpl.core.errors import ConfigError, DataFormatError
from dpl.data.dataset import Dataset, LabeledInstance
from dpl.data.formats import (
    load_binary,
    load_csv,
    load_dataset,
    save_binary,
    save_csv,
    save_dataset,
    sidecar_path,
)
from dpl.data.synthetic import (
    DESK_FINE_COUNTS,
    GeneratorSpec,
    class_summary,
    desk_generator_spec,
    generate_synthetic,
    split,
)


def _small_spec(seed=0):
    return GeneratorSpec(
        fine_means=[[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]],
        fine_stddev=[0.5, 0.5, 0.5],
        fine_counts=[10, 6, 4],
        fine_to_coarse=[0, 0, 1],
        group_size=5,
        seed=seed,
    )


def test_generate_synthetic_counts_and_labels():
    dataset = generate_synthetic(_small_spec())
    assert len(dataset) == 20
    assert dataset.num_classes == 2
    assert class_summary(dataset) == {0: 16, 1: 4}
    assert list(dataset.fine[:10]) == [0] * 10
    assert set(dataset.groups) == {0, 1, 2, 3}


def test_generate_synthetic_is_deterministic():
    assert generate_synthetic(_small_spec(3)).equals(generate_synthetic(_small_spec(3)))
    assert not generate_synthetic(_small_spec(3)).equals(generate_synthetic(_small_spec(4)))


def test_generator_zero_stddev_reproduces_means():
    spec = _small_spec()
    spec.fine_stddev = [0.0, 0.0, 0.0]
    dataset = generate_synthetic(spec)
    assert np.array_equal(dataset.features[0], [0.0, 0.0])
    assert np.array_equal(dataset.features[-1], [-5.0, 5.0])


@pytest.mark.parametrize("bad", [
    {"fine_counts": [10, 0, 4]},
    {"fine_to_coarse": [0, 0, 2]},
    {"fine_stddev": [0.5, -1.0, 0.5]},
    {"group_size": 0},
])
def test_generator_spec_validation(bad):
    kwargs = dict(fine_means=[[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]], fine_stddev=[0.5] * 3,
                  fine_counts=[10, 6, 4], fine_to_coarse=[0, 0, 1])
    kwargs.update(bad)
    with pytest.raises(ConfigError):
        GeneratorSpec(**kwargs)


def test_desk_generator_spec_shape():
    spec = desk_generator_spec(seed=1, d_in=8)
    assert spec.fine_counts == list(DESK_FINE_COUNTS)
    assert spec.fine_to_coarse == [0, 0, 0, 1, 2, 3]
    assert spec.num_classes == 4
    assert spec.feature_dim == 8
    assert spec.fine_stddev == [pytest.approx(8 ** -0.5)] * 6
    again = desk_generator_spec(seed=1, d_in=8)
    assert all(np.array_equal(a, b) for a, b in zip(spec.fine_means, again.fine_means))


def test_desk_features_have_unit_scale():
    dataset = generate_synthetic(desk_generator_spec(seed=2, d_in=32))
    mean_sq_norm = float(np.mean(np.sum(dataset.features ** 2, axis=1)))
    assert 0.5 < mean_sq_norm < 3.0


def test_generator_spec_document_broadcasts_stddev():
    doc = GeneratorSpecDocument(fine_means=[[0.0], [1.0]], fine_stddev=0.25,
                                fine_counts=[2, 3], fine_to_coarse=[0, 1])
    spec = doc.to_spec()
    assert spec.fine_stddev == [0.25, 0.25]
    assert generate_synthetic(spec).num_classes == 2


def test_split_sizes_and_determinism():
    dataset = generate_synthetic(_small_spec())
    train, test = split(dataset, 0.7, seed=5)
    assert (len(train), len(test)) == (14, 6)
    assert sorted(np.concatenate([train.ids, test.ids]).tolist()) == list(range(20))
    again, _ = split(dataset, 0.7, seed=5)
    assert train.equals(again)


@pytest.mark.parametrize("frac", [0.0, 1.0, 0.01])
def test_split_rejects_empty_sides(frac):
    with pytest.raises(ConfigError):
        split(generate_synthetic(_small_spec()), frac, seed=0)


def test_dataset_validation():
    with pytest.raises(DataFormatError):
        Dataset(ids=[0], groups=[0], labels=[3], features=[[1.0]], num_classes=2)
    with pytest.raises(DataFormatError):
        Dataset(ids=[0, 1], groups=[0, 0], labels=[0, 1], features=[[1.0]], num_classes=2)
    with pytest.raises(DataFormatError):
        Dataset(ids=[0], groups=[0], labels=[0], features=[[np.nan]], num_classes=1)


def test_dataset_instances_round_trip(tiny_dataset):
    instance = tiny_dataset[4]
    assert isinstance(instance, LabeledInstance)
    assert instance.label == int(tiny_dataset.labels[4])
    rebuilt = Dataset.from_instances(tiny_dataset.instances, tiny_dataset.num_classes)
    assert rebuilt.equals(tiny_dataset)


def test_csv_save_load_exact(tmp_path, tiny_dataset):
    path = tmp_path / "tiny.csv"
    save_csv(tiny_dataset, path)
    loaded = load_csv(path)
    assert loaded.equals(tiny_dataset)
    assert np.array_equal(loaded.fine, tiny_dataset.fine)
    assert sidecar_path(path).exists()


def test_binary_save_load_float32_features(tmp_path, tiny_dataset):
    path = tmp_path / "tiny.dplf"
    save_binary(tiny_dataset, path)
    loaded = load_binary(path)
    assert np.array_equal(loaded.labels, tiny_dataset.labels)
    assert np.array_equal(loaded.features, tiny_dataset.features.astype(np.float32).astype(np.float64))
    assert path.stat().st_size == 24 + len(tiny_dataset) * (16 + 4 * tiny_dataset.feature_dim)


def test_dispatch_by_extension(tmp_path, tiny_dataset):
    for name in ("d.csv", "d.bin"):
        save_dataset(tiny_dataset, tmp_path / name)
        assert load_dataset(tmp_path / name).num_classes == tiny_dataset.num_classes


def test_ragged_csv_names_row(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("id,group,label,f0,f1\n0,0,0,1.0,2.0\n1,0,1,3.0\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="row 2"):
        load_csv(path)


def test_csv_bad_header_and_values(tmp_path):
    bad_header = tmp_path / "header.csv"
    bad_header.write_text("id,label,f0\n0,0,1.0\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="Header") as info:
        load_csv(bad_header)
    assert info.value.row is None
    bad_value = tmp_path / "value.csv"
    bad_value.write_text("id,group,label,f0\n0,0,0,abc\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="row 1"):
        load_csv(bad_value)


def test_csv_missing_file(tmp_path):
    with pytest.raises(DataFormatError):
        load_csv(tmp_path / "missing.csv")


def _write_binary(path, magic=b"DPLF", version=1, count=2, dim=2, classes=2, records=2,
                  first_id=0):
    rec = struct.Struct("<QII2f")
    blob = struct.pack("<4sIQII", magic, version, count, dim, classes)
    for i in range(records):
        blob += rec.pack(first_id + i, 0, i, 1.0, 2.0)
    path.write_bytes(blob)


def test_binary_valid_fixture(tmp_path):
    path = tmp_path / "ok.dplf"
    _write_binary(path)
    loaded = load_binary(path)
    assert len(loaded) == 2
    assert loaded.feature_dim == 2


@pytest.mark.parametrize("kwargs, message", [
    ({"magic": b"XXXX"}, "magic"),
    ({"version": 9}, "version"),
    ({"count": 0, "records": 0}, "empty"),
    ({"count": 3}, "Truncated"),
    ({"count": 1}, "trailing"),
    ({"classes": 1}, "label"),
    ({"first_id": 2 ** 64 - 2}, "int64"),
])
def test_binary_malformed(tmp_path, kwargs, message):
    path = tmp_path / "bad.dplf"
    _write_binary(path, **kwargs)
    with pytest.raises(DataFormatError, match=message):
        load_binary(path)


def test_binary_truncated_header(tmp_path):
    path = tmp_path / "short.dplf"
    path.write_bytes(b"DPLF\x01")
    with pytest.raises(DataFormatError, match="Truncated header"):
        load_binary(path)


def test_binary_error_rows_count_records_from_one(tmp_path):
    path = tmp_path / "bad.dplf"
    _write_binary(path, classes=1)
    with pytest.raises(DataFormatError, match="row 2"):
        load_binary(path)


def test_dataset_error_rows_count_records_from_one():
    with pytest.raises(DataFormatError, match="row 2"):
        Dataset(ids=[0, 1], groups=[0, 0], labels=[0, 5], features=[[1.0], [2.0]],
                num_classes=2)


@pytest.mark.parametrize("content, message", [
    ("", "missing header"),
    ("id,group,label,f0\n", "No data rows"),
])
def test_empty_csv(tmp_path, content, message):
    path = tmp_path / "empty.csv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(DataFormatError, match=message):
        load_csv(path)


def test_csv_without_sidecar_warns_about_inferred_classes(tmp_path, caplog):
    path = tmp_path / "bare.csv"
    path.write_text("id,group,label,f0\n0,0,0,1.0\n1,0,7,2.0\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING, logger="dpl.data.formats"):
        dataset = load_csv(path)
    assert dataset.num_classes == 8
    assert "inferred as 8" in caplog.text
    assert "[1, 2, 3, 4, 5, 6]" in caplog.text


def test_csv_with_sidecar_does_not_warn(tmp_path, caplog, tiny_dataset):
    path = tmp_path / "kept.csv"
    save_csv(tiny_dataset, path)
    with caplog.at_level(logging.WARNING, logger="dpl.data.formats"):
        load_csv(path)
    assert "inferred" not in caplog.text
