"""
dpl/data/formats.py

Dataset file formats.

CSV:   header `id,group,label,f0,...,f{D-1}`, floats with 17 significant digits.
DPLF:  little-endian binary
         magic "DPLF" | u32 version=1 | u64 count | u32 feature_dim | u32 num_classes
         then per record: u64 id | u32 group | u32 label | feature_dim x f32

Both formats may have a sidecar `<path>.meta.json` carrying num_classes,
class names and fine-cluster provenance. Loaders never return a partial
dataset: any malformed row or record raises DataFormatError. Error row
numbers count data records from 1 in both formats (the CSV header is not a
record).
"""
from __future__ import annotations

import csv
import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from dpl.api.schemas import DatasetMetadata
from dpl.core.errors import DataFormatError
from dpl.core.files import PathLike, atomic_open, load_json_file, save_json_file
from dpl.data.dataset import Dataset

logger = logging.getLogger(__name__)

MAGIC = b"DPLF"
VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def _record_dtype(feature_dim: int) -> np.dtype:
    return np.dtype([
        ("id", "<u8"),
        ("group", "<u4"),
        ("label", "<u4"),
        ("feature", "<f4", (feature_dim,)),
    ])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- sidecar -------------------------------------------------------------

def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def _load_sidecar(path: PathLike) -> Optional[DatasetMetadata]:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        return None
    data = load_json_file(meta_path, error_cls=DataFormatError)
    try:
        return DatasetMetadata.model_validate(data)
    except ValidationError as e:
        raise DataFormatError(f"Invalid metadata: {e.errors()[0]['msg']}",
                              path=str(meta_path)) from e


def _save_sidecar(dataset: Dataset, path: PathLike) -> None:
    meta = DatasetMetadata(
        num_classes=dataset.num_classes,
        class_names=dataset.class_names,
        fine=None if dataset.fine is None else [int(k) for k in dataset.fine],
    )
    save_json_file(sidecar_path(path), meta.model_dump(mode="json"))


def _apply_sidecar(path: PathLike, ids, groups, labels, features,
                   num_classes: Optional[int]) -> Dataset:
    meta = _load_sidecar(path)
    class_names = None
    fine = None
    if meta is not None:
        if num_classes is not None and num_classes != meta.num_classes:
            raise DataFormatError(
                f"num_classes {num_classes} disagrees with metadata {meta.num_classes}",
                path=str(path))
        num_classes = meta.num_classes
        class_names = meta.class_names
        if meta.fine is not None:
            if len(meta.fine) != len(labels):
                raise DataFormatError(
                    f"metadata has {len(meta.fine)} fine entries for {len(labels)} rows",
                    path=str(sidecar_path(path)))
            fine = meta.fine
    if num_classes is None:
        num_classes = int(np.max(labels)) + 1
        empty = [k for k in range(num_classes) if not np.any(labels == k)]
        logger.warning("%s: no metadata sidecar, num_classes inferred as %d from the "
                       "largest label%s", path, num_classes,
                       f" (no rows for classes {empty})" if empty else "")
    return Dataset(ids=ids, groups=groups, labels=labels, features=features,
                   num_classes=num_classes, class_names=class_names, fine=fine,
                   source=str(path))


# --- CSV -----------------------------------------------------------------

def save_csv(dataset: Dataset, path: PathLike) -> None:
    dim = dataset.feature_dim
    header = ["id", "group", "label"] + [f"f{j}" for j in range(dim)]
    with atomic_open(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            writer.writerow(
                [int(dataset.ids[i]), int(dataset.groups[i]), int(dataset.labels[i])]
                + [_fmt(x) for x in dataset.features[i]])
    _save_sidecar(dataset, path)
    logger.info("Saved %d instances to %s", len(dataset), path)


def load_csv(path: PathLike, num_classes: Optional[int] = None) -> Dataset:
    """
    Load a CSV dataset.

    Args:
        path: CSV file
        num_classes: Expected |P|; defaults to the sidecar value, else max label + 1

    Raises:
        DataFormatError: Missing file or header, ragged or unparsable rows,
            labels out of range. Rows are numbered from the first data record.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except FileNotFoundError as e:
        raise DataFormatError("File not found", path=str(path)) from e
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise DataFormatError(f"Cannot read CSV: {e}", path=str(path)) from e

    if not rows:
        raise DataFormatError("Empty file (missing header)", path=str(path))
    header = [cell.strip() for cell in rows[0]]
    dim = len(header) - 3
    expected = ["id", "group", "label"] + [f"f{j}" for j in range(max(dim, 0))]
    if dim < 1 or header != expected:
        raise DataFormatError(
            "Header must be id,group,label,f0,...,f{D-1}", path=str(path))

    body = [row for row in rows[1:] if row]
    if not body:
        raise DataFormatError("No data rows", path=str(path))

    count = len(body)
    ids = np.empty(count, dtype=np.int64)
    groups = np.empty(count, dtype=np.int64)
    labels = np.empty(count, dtype=np.int64)
    features = np.empty((count, dim), dtype=np.float64)
    for i, row in enumerate(body):
        record = i + 1
        if len(row) != dim + 3:
            raise DataFormatError(
                f"expected {dim + 3} fields, got {len(row)}", path=str(path), row=record)
        try:
            ids[i] = int(row[0])
            groups[i] = int(row[1])
            labels[i] = int(row[2])
            features[i] = [float(x) for x in row[3:]]
        except ValueError as e:
            raise DataFormatError(f"unparsable value ({e})", path=str(path), row=record) from e
        if not np.all(np.isfinite(features[i])):
            raise DataFormatError("non-finite feature value", path=str(path), row=record)
        if labels[i] < 0 or (num_classes is not None and labels[i] >= num_classes):
            raise DataFormatError(f"label {labels[i]} out of range", path=str(path),
                                  row=record)
        if ids[i] < 0 or groups[i] < 0:
            raise DataFormatError("negative id or group", path=str(path), row=record)

    dataset = _apply_sidecar(path, ids, groups, labels, features, num_classes)
    logger.info("Loaded %d instances from %s", count, path)
    return dataset


# --- DPLF binary ---------------------------------------------------------

def save_binary(dataset: Dataset, path: PathLike) -> None:
    dim = dataset.feature_dim
    records = np.zeros(len(dataset), dtype=_record_dtype(dim))
    records["id"] = dataset.ids
    records["group"] = dataset.groups
    records["label"] = dataset.labels
    records["feature"] = dataset.features.astype("<f4")
    with atomic_open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(dataset), dim, dataset.num_classes))
        f.write(records.tobytes())
    _save_sidecar(dataset, path)
    logger.info("Saved %d instances to %s", len(dataset), path)


def load_binary(path: PathLike) -> Dataset:
    """
    Load a DPLF file.

    Raises:
        DataFormatError: Bad magic or version, zero count, truncated or
            over-long payload, labels out of range, ids beyond int64.
    """
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise DataFormatError("File not found", path=str(path)) from e
    except OSError as e:
        raise DataFormatError(f"Cannot read file: {e}", path=str(path)) from e

    if len(blob) < _HEADER.size:
        raise DataFormatError("Truncated header", path=str(path))
    magic, version, count, dim, num_classes = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataFormatError(f"Bad magic {magic!r}", path=str(path))
    if version != VERSION:
        raise DataFormatError(f"Unsupported version {version}", path=str(path))
    if count == 0:
        raise DataFormatError("Dataset is empty (count=0)", path=str(path))
    if dim == 0 or num_classes == 0:
        raise DataFormatError("feature_dim and num_classes must be >= 1", path=str(path))

    dtype = _record_dtype(dim)
    payload = len(blob) - _HEADER.size
    expected = count * dtype.itemsize
    if payload < expected:
        complete = payload // dtype.itemsize
        raise DataFormatError(
            f"Truncated: {complete} complete records of {count}", path=str(path),
            row=complete + 1)
    if payload > expected:
        raise DataFormatError(f"{payload - expected} trailing bytes after last record",
                              path=str(path))

    records = np.frombuffer(blob, dtype=dtype, count=count, offset=_HEADER.size)
    too_large = np.flatnonzero(records["id"] > np.uint64(np.iinfo(np.int64).max))
    if too_large.size:
        raise DataFormatError(f"id {int(records['id'][too_large[0]])} exceeds the int64 range",
                              path=str(path), row=int(too_large[0]) + 1)
    labels = records["label"].astype(np.int64)
    bad = np.flatnonzero(labels >= num_classes)
    if bad.size:
        raise DataFormatError(f"label {int(labels[bad[0]])} >= num_classes {num_classes}",
                              path=str(path), row=int(bad[0]) + 1)
    features = records["feature"].astype(np.float64)
    non_finite = np.flatnonzero(~np.all(np.isfinite(features), axis=1))
    if non_finite.size:
        raise DataFormatError("non-finite feature value", path=str(path),
                              row=int(non_finite[0]) + 1)

    dataset = _apply_sidecar(path, records["id"].astype(np.int64),
                             records["group"].astype(np.int64), labels, features,
                             num_classes)
    logger.info("Loaded %d instances from %s", count, path)
    return dataset


# --- dispatch ------------------------------------------------------------

def is_csv(path: PathLike) -> bool:
    return Path(path).suffix.lower() == ".csv"


def load_dataset(path: PathLike) -> Dataset:
    """Load by extension: `.csv` is CSV, anything else is DPLF."""
    return load_csv(path) if is_csv(path) else load_binary(path)


def save_dataset(dataset: Dataset, path: PathLike) -> None:
    if is_csv(path):
        save_csv(dataset, path)
    else:
        save_binary(dataset, path)
