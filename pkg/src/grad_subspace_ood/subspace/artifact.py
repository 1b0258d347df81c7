"""
Subspace artifact I/O.

Layout (little-endian)::

    "GSO-SUBSP\\0" | u16 version=1 | u8 kind | u64 |θ| | u32 K | u8 orthonormalized
    | u32 n_fit | f32 epsilon
    | f32[|θ|] mean M | f32[|θ|] var_diag I | f32[|θ|·K] basis V (column-major)
    | f32[K or 0] eigenvalues | f32[1 or 0] total_variance | u32 CRC32

Convergence details and the run configuration go to the JSON sidecar.
"""

from pathlib import Path
from typing import Any

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.config.config import SubspaceKind
from grad_subspace_ood.gradembed.normalization import NormStats
from grad_subspace_ood.storage.container import (
    ContainerReader,
    ContainerWriter,
    atomic_write_bytes,
    read_bytes,
    read_sidecar,
    write_sidecar,
)
from grad_subspace_ood.subspace.basis import Subspace
from grad_subspace_ood.utils.errors import FormatError, GsoError, InvariantError
from grad_subspace_ood.utils.logger import logger

SUBSPACE_MAGIC = b"GSO-SUBSP\x00"
# float32 storage limits how orthonormal a loaded basis can be
LOAD_ORTHONORMAL_TOL = 1e-5

_KIND_CODES = {SubspaceKind.PCA: 0, SubspaceKind.CLASS_MEAN: 1}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


def encode_subspace(sub: Subspace) -> bytes:
    writer = ContainerWriter(SUBSPACE_MAGIC)
    writer.u8(_KIND_CODES[sub.kind])
    writer.u64(sub.num_params)
    writer.u32(sub.k)
    writer.u8(1 if sub.orthonormalized else 0)
    writer.u32(sub.norm_stats.n_fit)
    writer.f32_array([sub.norm_stats.epsilon])
    writer.f32_array(sub.norm_stats.mean)
    writer.f32_array(sub.norm_stats.var_diag)
    writer.f32_array(sub.basis.T)
    if sub.kind == SubspaceKind.PCA:
        writer.f32_array(sub.eigenvalues if sub.eigenvalues is not None else [])
        writer.f32_array([sub.total_variance or 0.0])
    return writer.finish()


def decode_subspace(data: bytes, source: str = "<memory>") -> Subspace:
    """
    Decode and validate a subspace artifact.

    Raises:
        FormatError: Bad framing, CRC, kind code or length
        InvariantError: Decoded fields violate the subspace invariants
    """
    reader = ContainerReader(data, SUBSPACE_MAGIC, source)
    code = reader.u8()
    if code not in _CODE_KINDS:
        raise FormatError(f"{source}: unknown subspace kind code {code}")
    kind = _CODE_KINDS[code]
    num_params = reader.u64()
    k = reader.u32()
    orthonormalized = reader.u8() == 1
    n_fit = reader.u32()
    (epsilon,) = reader.f32_array(1)
    mean = reader.f32_array(num_params)
    var_diag = reader.f32_array(num_params)
    basis = reader.f32_array(num_params * k).reshape(k, num_params).T.copy()
    eigenvalues = None
    total_variance = None
    if kind == SubspaceKind.PCA:
        eigenvalues = reader.f32_array(k)
        (total_variance,) = reader.f32_array(1)
    reader.expect_end()

    meta = read_sidecar(source) if source != "<memory>" else {}
    try:
        stats = NormStats(mean, var_diag, float(epsilon), n_fit)
        sub = Subspace(
            basis=basis,
            eigenvalues=eigenvalues,
            kind=kind,
            norm_stats=stats,
            orthonormalized=orthonormalized,
            total_variance=None if total_variance is None else float(total_variance),
            converged=bool(meta.get("converged", True)),
            iterations=int(meta.get("iterations", 0)),
        )
        sub.validate(LOAD_ORTHONORMAL_TOL)
    except InvariantError as e:
        raise InvariantError(f"{source}: {e}") from e
    except GsoError as e:
        raise InvariantError(f"{source}: invalid subspace ({e})") from e
    return sub


def save_subspace(
    sub: Subspace, path: str | Path, run_config: dict[str, Any] | None = None
) -> None:
    """Write the subspace blob and its metadata sidecar atomically."""
    atomic_write_bytes(path, encode_subspace(sub))
    write_sidecar(
        path,
        {
            "artifact": "subspace",
            "tool_version": TOOL_VERSION,
            "kind": sub.kind.value,
            "k": sub.k,
            "converged": sub.converged,
            "iterations": sub.iterations,
            "run_config": run_config or {},
        },
    )
    logger.info(f"Saved {sub.kind.value} subspace K={sub.k} to {path}")


def load_subspace(path: str | Path) -> Subspace:
    """Load a subspace artifact, validating framing and invariants."""
    return decode_subspace(read_bytes(path), str(path))
