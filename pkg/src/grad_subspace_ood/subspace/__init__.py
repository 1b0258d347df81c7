"""
Projection bases for gradient embeddings.
"""

from grad_subspace_ood.subspace.artifact import (
    decode_subspace,
    encode_subspace,
    load_subspace,
    save_subspace,
)
from grad_subspace_ood.subspace.basis import (
    Spectrum,
    Subspace,
    embed_projected,
    extract_classmean_subspace,
    extract_classmean_subspace_streaming,
    extract_pca_subspace,
    project,
    project_batch,
    spectrum,
)
from grad_subspace_ood.subspace.eigensolver import (
    PowerIterationResult,
    block_power_iteration,
    fix_signs,
    gram_schmidt,
    orthonormality_error,
)

__all__ = [
    "PowerIterationResult",
    "Spectrum",
    "Subspace",
    "block_power_iteration",
    "decode_subspace",
    "embed_projected",
    "encode_subspace",
    "extract_classmean_subspace",
    "extract_classmean_subspace_streaming",
    "extract_pca_subspace",
    "fix_signs",
    "gram_schmidt",
    "load_subspace",
    "orthonormality_error",
    "project",
    "project_batch",
    "save_subspace",
    "spectrum",
]
