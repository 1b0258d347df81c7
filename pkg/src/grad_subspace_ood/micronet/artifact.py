"""
Model artifact I/O.

A model is two files: the binary parameter blob at ``path`` and a key/value
manifest at ``<path>.manifest``::

    "GSO-MODEL\\0" | u16 version=1 | u64 |θ| | f32[|θ|] values | u32 CRC32

The manifest carries ``layer_dims``, ``activation``, ``affine_norm``, ``seed``,
``tool_version`` and the JSON-encoded run configuration.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.micronet.model import ModelSpec, ParamVector
from grad_subspace_ood.storage.container import (
    ContainerReader,
    ContainerWriter,
    atomic_write_bytes,
    atomic_write_text,
    read_bytes,
)
from grad_subspace_ood.utils.errors import FormatError, InvariantError
from grad_subspace_ood.utils.logger import logger

MODEL_MAGIC = b"GSO-MODEL\x00"
MANIFEST_SUFFIX = ".manifest"


@dataclass(frozen=True)
class ModelArtifact:
    """A loaded model: architecture, parameters and provenance."""

    spec: ModelSpec
    params: ParamVector
    seed: int
    run_config: dict[str, Any]


def manifest_path(path: str | Path) -> Path:
    target = Path(path)
    return target.with_name(target.name + MANIFEST_SUFFIX)


def encode_params(params: ParamVector) -> bytes:
    writer = ContainerWriter(MODEL_MAGIC)
    writer.u64(params.size)
    writer.f32_array(params.values)
    return writer.finish()


def render_manifest(spec: ModelSpec, seed: int, run_config: dict[str, Any]) -> str:
    """Key/value text, one ``key=value`` per line in fixed order."""
    lines = [
        f"layer_dims={','.join(str(d) for d in spec.layer_dims)}",
        f"activation={spec.activation.value}",
        f"affine_norm={'true' if spec.has_affine_norm_per_hidden else 'false'}",
        f"seed={seed}",
        f"tool_version={TOOL_VERSION}",
        f"run_config={json.dumps(run_config, sort_keys=True)}",
    ]
    return "\n".join(lines) + "\n"


def parse_manifest(text: str, source: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{source}:{line_no}: expected key=value")
        entries[key.strip()] = value.strip()
    return entries


def save_model(
    path: str | Path,
    spec: ModelSpec,
    params: ParamVector,
    seed: int,
    run_config: dict[str, Any] | None = None,
) -> None:
    """Write the parameter blob and its manifest atomically."""
    if params.size != spec.num_params:
        raise InvariantError(
            f"params have {params.size} values, spec needs {spec.num_params}"
        )
    atomic_write_bytes(path, encode_params(params))
    manifest = render_manifest(spec, seed, run_config or {})
    atomic_write_text(manifest_path(path), manifest)
    logger.info(f"Saved model ({params.size} params) to {path}")


def load_model(path: str | Path) -> ModelArtifact:
    """
    Load and validate a model artifact.

    Raises:
        FormatError: Bad framing, CRC, manifest syntax or missing keys
        InvariantError: Parameter count disagrees with the manifest
    """
    source = str(path)
    reader = ContainerReader(read_bytes(path), MODEL_MAGIC, source)
    count = reader.u64()
    values = reader.f32_array(count)
    reader.expect_end()

    mpath = manifest_path(path)
    try:
        text = mpath.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise FormatError(f"{mpath}: manifest not found") from e
    entries = parse_manifest(text, str(mpath))
    try:
        spec = ModelSpec(
            layer_dims=[int(d) for d in entries["layer_dims"].split(",")],
            activation=entries["activation"],
            has_affine_norm_per_hidden=entries["affine_norm"] == "true",
        )
        seed = int(entries["seed"])
        run_config = json.loads(entries.get("run_config", "{}"))
    except (KeyError, ValueError, ValidationError) as e:
        raise FormatError(f"{mpath}: invalid manifest ({e})") from e
    if count != spec.num_params:
        raise InvariantError(
            f"{source}: blob holds {count} params, manifest implies {spec.num_params}"
        )
    return ModelArtifact(spec, ParamVector.for_spec(spec, values), seed, run_config)
