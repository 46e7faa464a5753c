"""
dpl/modeling/checkpoint.py

Checkpoint persistence: one JSON document with dims, step and every
parameter array. Floats are written in shortest round-trip form, so a
save/load cycle reproduces every float64 exactly.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import ValidationError

from dpl.api.schemas import CheckpointDims, CheckpointDocument
from dpl.core.errors import CheckpointError
from dpl.core.files import PathLike, load_json_file, save_json_file
from dpl.modeling.model import (
    ModelState,
    PrototypeBank,
    ProjectorParams,
    ScaleParams,
    VarianceNet,
)

logger = logging.getLogger(__name__)


def to_document(model: ModelState) -> CheckpointDocument:
    d_in, d, p = model.dims
    net = model.variance_net
    return CheckpointDocument(
        dims=CheckpointDims(d_in=d_in, d=d, num_classes=p, hidden=net.hidden),
        step=model.step,
        sigma2_floor=net.sigma2_floor,
        a=model.a,
        b=model.b,
        projector_weight=model.projector.weight.tolist(),
        projector_bias=model.projector.bias.tolist(),
        prototypes=model.prototypes.C.tolist(),
        variance_w1=net.w1.tolist(),
        variance_b1=net.b1.tolist(),
        variance_w2=net.w2.tolist(),
        variance_b2=net.b2.tolist(),
    )


def from_document(doc: CheckpointDocument) -> ModelState:
    arr = lambda values: np.array(values, dtype=np.float64)  # noqa: E731
    return ModelState(
        projector=ProjectorParams(weight=arr(doc.projector_weight), bias=arr(doc.projector_bias)),
        prototypes=PrototypeBank(C=arr(doc.prototypes)),
        variance_net=VarianceNet(w1=arr(doc.variance_w1), b1=arr(doc.variance_b1),
                                 w2=arr(doc.variance_w2), b2=arr(doc.variance_b2),
                                 sigma2_floor=doc.sigma2_floor),
        scales=ScaleParams(a=np.array(doc.a), b=np.array(doc.b)),
        step=doc.step,
    )


def save_checkpoint(model: ModelState, path: PathLike) -> None:
    save_json_file(path, to_document(model).model_dump(mode="json"))
    logger.info("Checkpoint (step %d) saved to %s", model.step, path)


def load_checkpoint(path: PathLike,
                    expected_dims: Optional[Tuple[Optional[int], Optional[int], Optional[int]]] = None
                    ) -> ModelState:
    """
    Load a checkpoint.

    Args:
        path: Checkpoint JSON
        expected_dims: Optional (d_in, d, num_classes); None entries are not checked

    Raises:
        CheckpointError: Missing/truncated file, schema mismatch, shape mismatch
    """
    data = load_json_file(path, error_cls=CheckpointError)
    try:
        doc = CheckpointDocument.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise CheckpointError(f"Schema mismatch at '{where}': {first['msg']}",
                              path=str(path)) from e
    model = from_document(doc)
    if expected_dims is not None:
        for name, want, have in zip(("d_in", "d", "num_classes"), expected_dims, model.dims):
            if want is not None and want != have:
                raise CheckpointError(f"Shape mismatch: checkpoint {name}={have}, expected {want}",
                                      path=str(path))
    if not all(np.all(np.isfinite(v)) for v in model.named_parameters().values()):
        raise CheckpointError("Checkpoint holds non-finite parameters", path=str(path))
    return model
