"""
Model types for the fully-connected ReLU classifier.

``ModelSpec`` describes the architecture, ``ParamVector`` holds every learnable
parameter in one flat vector together with a manifest of named slices, and
``SampleBatch`` carries inputs with optional labels.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from grad_subspace_ood.config.config import Activation
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError

FloatArray = NDArray[np.float64]


class ModelSpec(BaseModel):
    """Architecture of a fully-connected classifier."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    layer_dims: list[int] = Field(..., min_length=2)
    activation: Activation = Field(default=Activation.RELU)
    has_affine_norm_per_hidden: bool = Field(default=False)

    @field_validator("layer_dims")
    @classmethod
    def validate_layer_dims(cls, value: list[int]) -> list[int]:
        """Every width is positive and the output has at least two classes."""
        if any(width < 1 for width in value):
            raise ValueError("layer_dims entries must be positive")
        if value[-1] < 2:
            raise ValueError("the output dimension C must be at least 2")
        return value

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def num_params(self) -> int:
        return sum(entry.length for entry in self.manifest())

    def manifest(self) -> list["SliceEntry"]:
        """
        Ordered parameter slices.

        Layer ``l`` contributes ``weight`` (out x in, row-major) and ``bias``;
        hidden layers with affine norm add ``norm_scale`` and ``norm_shift``.
        """
        entries: list[SliceEntry] = []
        offset = 0
        for layer, (fan_in, fan_out) in enumerate(
            zip(self.layer_dims[:-1], self.layer_dims[1:], strict=True)
        ):
            shapes: list[tuple[str, tuple[int, ...]]] = [
                ("weight", (fan_out, fan_in)),
                ("bias", (fan_out,)),
            ]
            if self.has_affine_norm_per_hidden and layer < self.num_layers - 1:
                shapes += [("norm_scale", (fan_out,)), ("norm_shift", (fan_out,))]
            for kind, shape in shapes:
                length = int(np.prod(shape))
                entries.append(
                    SliceEntry(f"layer{layer}.{kind}", layer, offset, length, shape)
                )
                offset += length
        return entries


class SliceEntry(NamedTuple):
    """One named parameter block inside the flat vector."""

    name: str
    layer: int
    offset: int
    length: int
    shape: tuple[int, ...]


class LayerParams(NamedTuple):
    """Views of one layer's parameters; norm fields are None when absent."""

    weight: FloatArray
    bias: FloatArray
    norm_scale: FloatArray | None
    norm_shift: FloatArray | None


@dataclass(frozen=True)
class ParamVector:
    """Flat vector of all learnable parameters plus its slice manifest."""

    values: FloatArray
    manifest: list[SliceEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ConfigurationError("ParamVector values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise UsageError("ParamVector values must be finite")
        expected = 0
        for entry in self.manifest:
            if entry.offset != expected or entry.length < 0:
                raise ConfigurationError(
                    f"manifest slice {entry.name} is not contiguous at {entry.offset}"
                )
            expected += entry.length
        if self.manifest and expected != values.size:
            raise ConfigurationError(
                f"manifest covers {expected} values but vector has {values.size}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def for_spec(cls, spec: ModelSpec, values: ArrayLike) -> "ParamVector":
        """Wrap ``values`` with the manifest of ``spec``."""
        array = np.asarray(values, dtype=np.float64)
        if array.shape != (spec.num_params,):
            raise ConfigurationError(
                f"expected {spec.num_params} parameters, got shape {array.shape}"
            )
        return cls(array, spec.manifest())

    @property
    def size(self) -> int:
        return int(self.values.size)

    def unpack(self, spec: ModelSpec) -> list[LayerParams]:
        """Split the flat vector into per-layer views (no copies)."""
        return unpack_layers(spec, self.values)


def unpack_layers(spec: ModelSpec, flat: FloatArray) -> list[LayerParams]:
    """Split any flat |θ|-vector (parameters or a direction) into layer views."""
    if flat.shape[-1] != spec.num_params:
        raise ConfigurationError(
            f"expected trailing dimension {spec.num_params}, got {flat.shape[-1]}"
        )
    blocks: dict[str, FloatArray] = {}
    lead = flat.shape[:-1]
    for entry in spec.manifest():
        block = flat[..., entry.offset : entry.offset + entry.length]
        blocks[entry.name] = block.reshape(lead + entry.shape)
    layers: list[LayerParams] = []
    for layer in range(spec.num_layers):
        prefix = f"layer{layer}."
        layers.append(
            LayerParams(
                weight=blocks[prefix + "weight"],
                bias=blocks[prefix + "bias"],
                norm_scale=blocks.get(prefix + "norm_scale"),
                norm_shift=blocks.get(prefix + "norm_shift"),
            )
        )
    return layers


@dataclass(frozen=True)
class SampleBatch:
    """Inputs (n x d_in) with optional integer labels."""

    inputs: FloatArray
    labels: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim == 1:
            inputs = inputs[None, :]
        if inputs.ndim != 2:
            raise ConfigurationError("SampleBatch inputs must be a matrix")
        if not np.all(np.isfinite(inputs)):
            raise UsageError("SampleBatch inputs must be finite")
        object.__setattr__(self, "inputs", inputs)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (inputs.shape[0],):
                raise ConfigurationError(
                    f"labels shape {labels.shape} does not match {inputs.shape[0]} rows"
                )
            if labels.size and (
                not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0
            ):
                raise UsageError("labels must be non-negative integers")
            object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, index: slice | NDArray[np.int64]) -> "SampleBatch":
        labels = None if self.labels is None else self.labels[index]
        return SampleBatch(self.inputs[index], labels)

    def check_against(self, spec: ModelSpec) -> None:
        """Validate input width and label range against a model spec."""
        if self.dim != spec.input_dim:
            raise ConfigurationError(
                f"batch input dim {self.dim} "
                f"does not match model input {spec.input_dim}"
            )
        if self.labels is not None and self.labels.size:
            if int(self.labels.max()) >= spec.num_classes:
                raise UsageError(
                    f"label {int(self.labels.max())} out of range for "
                    f"{spec.num_classes} classes"
                )


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """
    Seeded initialization: weights and biases uniform in ±1/sqrt(fan_in),
    affine-norm scale 1 and shift 0.
    """
    rng = np.random.default_rng(seed)
    values = np.empty(spec.num_params, dtype=np.float64)
    for entry in spec.manifest():
        target = values[entry.offset : entry.offset + entry.length]
        kind = entry.name.split(".", 1)[1]
        if kind == "norm_scale":
            target[:] = 1.0
        elif kind == "norm_shift":
            target[:] = 0.0
        else:
            fan_in = spec.layer_dims[entry.layer]
            bound = 1.0 / np.sqrt(fan_in)
            target[:] = rng.uniform(-bound, bound, size=entry.length)
    return ParamVector.for_spec(spec, values)
