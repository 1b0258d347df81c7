"""
Dataset files: inputs, embeddings and score streams share one container.

Layout (little-endian)::

    "GSO-DATA\\0" | u16 version=1 | u32 n | u32 dim | u8 has_labels
    | f32[n·dim] row-major values | u32[n] labels (if has_labels) | u32 CRC32

Embedding files use dim=K, score streams dim=1. CSV import/export is offered
for interoperability: one row per sample, feature columns ``x0..x{dim-1}``
and an optional trailing ``label`` column.
"""

import csv
import io
from pathlib import Path
from typing import Any

import numpy as np

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.micronet.model import FloatArray, SampleBatch
from grad_subspace_ood.storage.container import (
    ContainerReader,
    ContainerWriter,
    atomic_write_bytes,
    atomic_write_text,
    read_bytes,
    write_sidecar,
)
from grad_subspace_ood.utils.errors import FormatError, GsoError, InvariantError
from grad_subspace_ood.utils.logger import logger

DATA_MAGIC = b"GSO-DATA\x00"


def encode_dataset(batch: SampleBatch) -> bytes:
    writer = ContainerWriter(DATA_MAGIC)
    writer.u32(len(batch))
    writer.u32(batch.dim)
    writer.u8(0 if batch.labels is None else 1)
    writer.f32_array(batch.inputs)
    if batch.labels is not None:
        writer.u32_array(batch.labels)
    return writer.finish()


def decode_dataset(data: bytes, source: str = "<memory>") -> SampleBatch:
    """
    Decode a dataset container.

    Raises:
        FormatError: Bad framing, CRC or length
        InvariantError: Non-finite values
    """
    reader = ContainerReader(data, DATA_MAGIC, source)
    n = reader.u32()
    dim = reader.u32()
    has_labels = reader.u8()
    if has_labels not in (0, 1):
        raise FormatError(f"{source}: has_labels must be 0 or 1, got {has_labels}")
    inputs = reader.f32_array(n * dim).reshape(n, dim)
    labels = reader.u32_array(n) if has_labels else None
    reader.expect_end()
    try:
        return SampleBatch(inputs, labels)
    except GsoError as e:
        raise InvariantError(f"{source}: {e}") from e


def save_dataset(
    batch: SampleBatch,
    path: str | Path,
    metadata: dict[str, Any] | None = None,
) -> None:
    """Write a dataset container and its sidecar atomically."""
    atomic_write_bytes(path, encode_dataset(batch))
    write_sidecar(
        path,
        {
            "artifact": "dataset",
            "tool_version": TOOL_VERSION,
            "n": len(batch),
            "dim": batch.dim,
            "has_labels": batch.labels is not None,
            **(metadata or {}),
        },
    )
    logger.debug(f"Saved dataset n={len(batch)} dim={batch.dim} to {path}")


def load_dataset(path: str | Path) -> SampleBatch:
    return decode_dataset(read_bytes(path), str(path))


def save_matrix(
    values: FloatArray,
    path: str | Path,
    labels: np.ndarray | None = None,
    metadata: dict[str, Any] | None = None,
) -> None:
    """Store an embedding matrix (n, K) or a score vector (n,) as a dataset."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    save_dataset(SampleBatch(matrix, labels), path, metadata)


def load_scores(path: str | Path) -> FloatArray:
    """Load a score stream written by ``save_matrix``."""
    batch = load_dataset(path)
    if batch.dim != 1:
        raise FormatError(f"{path}: score streams have dim 1, found {batch.dim}")
    return batch.inputs[:, 0]


def export_csv(batch: SampleBatch, path: str | Path) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = [f"x{j}" for j in range(batch.dim)]
    if batch.labels is not None:
        header.append("label")
    writer.writerow(header)
    for i in range(len(batch)):
        row = [repr(float(v)) for v in batch.inputs[i]]
        if batch.labels is not None:
            row.append(str(int(batch.labels[i])))
        writer.writerow(row)
    atomic_write_text(path, buffer.getvalue())


def import_csv(path: str | Path) -> SampleBatch:
    """
    Read a CSV with a header row; a column named ``label`` holds class indices.

    Raises:
        FormatError: Missing file, ragged rows or non-numeric cells
    """
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except FileNotFoundError as e:
        raise FormatError(f"{path}: file not found") from e
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    header, body = rows[0], [row for row in rows[1:] if row]
    label_col = header.index("label") if "label" in header else None
    feature_cols = [j for j in range(len(header)) if j != label_col]
    try:
        if any(len(row) != len(header) for row in body):
            raise ValueError("ragged rows")
        inputs = np.array(
            [[float(row[j]) for j in feature_cols] for row in body], dtype=np.float64
        ).reshape(len(body), len(feature_cols))
        labels = (
            np.array([int(row[label_col]) for row in body], dtype=np.int64)
            if label_col is not None
            else None
        )
        return SampleBatch(inputs, labels)
    except (ValueError, GsoError) as e:
        raise FormatError(f"{path}: invalid CSV dataset ({e})") from e
