"""
dpl/api/schemas.py

Pydantic models for every JSON document the package reads or writes.
"""
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CHECKPOINT_FORMAT = "dpl-checkpoint"
CHECKPOINT_VERSION = 1


class GeneratorSpecDocument(BaseModel):
    """Synthetic dataset generator spec (`gen-data --spec`)."""

    model_config = ConfigDict(extra="forbid")

    fine_means: List[List[float]] = Field(..., min_length=1)
    fine_stddev: Union[float, List[float]] = Field(
        1.0, description="One stddev per fine cluster, or a scalar for all")
    fine_counts: List[int]
    fine_to_coarse: List[int]
    group_size: int = Field(25, ge=1)
    seed: int = Field(0, ge=0)
    class_names: Optional[List[str]] = None

    @field_validator("fine_stddev")
    @classmethod
    def broadcast_stddev(cls, v, info):
        if isinstance(v, (int, float)):
            means = info.data.get("fine_means") or []
            return [float(v)] * len(means)
        return v

    def to_spec(self):
        from dpl.data.synthetic import GeneratorSpec
        return GeneratorSpec(
            fine_means=self.fine_means,
            fine_stddev=list(self.fine_stddev),
            fine_counts=self.fine_counts,
            fine_to_coarse=self.fine_to_coarse,
            group_size=self.group_size,
            seed=self.seed,
            class_names=self.class_names,
        )


class DatasetMetadata(BaseModel):
    """Sidecar `<data>.meta.json` next to a CSV or DPLF file."""

    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(..., ge=1)
    class_names: Optional[List[str]] = None
    fine: Optional[List[int]] = None


class CheckpointDims(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_in: int = Field(..., ge=1)
    d: int = Field(..., ge=1)
    num_classes: int = Field(..., ge=1)
    hidden: int = Field(..., ge=1)


def _shape(value) -> tuple:
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            widths = {len(row) for row in value}
            if len(widths) != 1:
                return (len(value), -1)
            return (len(value), widths.pop())
        return (len(value),)
    return ()


class CheckpointDocument(BaseModel):
    """Every learnable parameter plus dims and step."""

    model_config = ConfigDict(extra="forbid")

    format: Literal["dpl-checkpoint"] = CHECKPOINT_FORMAT
    version: Literal[1] = CHECKPOINT_VERSION
    dims: CheckpointDims
    step: int = Field(..., ge=0)
    sigma2_floor: float = Field(..., ge=0)
    a: float
    b: float
    projector_weight: List[List[float]]
    projector_bias: List[float]
    prototypes: List[List[float]]
    variance_w1: List[List[float]]
    variance_b1: List[float]
    variance_w2: List[List[float]]
    variance_b2: List[float]

    @model_validator(mode="after")
    def check_shapes(self):
        d_in, d = self.dims.d_in, self.dims.d
        p, h = self.dims.num_classes, self.dims.hidden
        expected = {
            "projector_weight": (d, d_in),
            "projector_bias": (d,),
            "prototypes": (p, d),
            "variance_w1": (h, d),
            "variance_b1": (h,),
            "variance_w2": (d, h),
            "variance_b2": (d,),
        }
        for name, shape in expected.items():
            actual = _shape(getattr(self, name))
            if actual != shape:
                raise ValueError(f"{name} has shape {actual}, expected {shape}")
        return self


class MetricsDocument(BaseModel):
    """Result of `eval`."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal["biased", "unbiased"]
    micro_recall: float = Field(..., ge=0, le=1)
    mean_recall: float = Field(..., ge=0, le=1)
    harmonic_f: float = Field(..., ge=0, le=1)
    arithmetic_mean: float = Field(..., ge=0, le=1)
    per_class_recall: List[Optional[float]]
    recall_at_k: Dict[str, float] = Field(default_factory=dict)
    present_classes: List[int]
    confusion: List[List[int]]
    fine_recall: Optional[Dict[str, float]] = None


class ComparisonDocument(BaseModel):
    """Result of `compare`: both inference modes side by side."""

    model_config = ConfigDict(extra="forbid")

    biased: MetricsDocument
    unbiased: MetricsDocument
    micro_recall_delta: float
    mean_recall_delta: float
    harmonic_f_delta: float
    per_class_recall_delta: List[Optional[float]]


class TrialRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    value: float
    seed: int
    biased: MetricsDocument
    unbiased: MetricsDocument


class SweepDocument(BaseModel):
    """Result of `sweep`."""

    model_config = ConfigDict(extra="forbid")

    param: Literal["N", "R", "alpha"]
    values: List[float]
    seeds: List[int]
    steps: int
    trials: List[TrialRecord]
