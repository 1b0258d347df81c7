"""
Raw label-free gradients and their training-set normalization.
"""

from grad_subspace_ood.gradembed.normalization import (
    DEFAULT_EPSILON,
    NormalizedGradient,
    NormStats,
    RawGradient,
    embed_raw,
    embed_raw_batch,
    energies,
    energy,
    fit_norm_stats,
    normalize,
    normalize_batch,
)
from grad_subspace_ood.gradembed.operator import NormalizedGradientOperator

__all__ = [
    "DEFAULT_EPSILON",
    "NormStats",
    "NormalizedGradient",
    "NormalizedGradientOperator",
    "RawGradient",
    "embed_raw",
    "embed_raw_batch",
    "energies",
    "energy",
    "fit_norm_stats",
    "normalize",
    "normalize_batch",
]
