"""
How well class means summarize normalized gradients.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError


class CosineReport(BaseModel):
    """Mean cosine similarity of gradients to their own and other class means."""

    model_config = ConfigDict(frozen=True)

    per_class: list[float] = Field(..., description="Within-class mean per class")
    within_class: float = Field(..., description="Mean over all samples")
    cross_class: float = Field(..., description="Mean similarity to other classes")


def class_means(grads: FloatArray, labels: np.ndarray, num_classes: int) -> FloatArray:
    """(C, |θ|) plain per-class means; every class needs a sample."""
    means = np.zeros((num_classes, grads.shape[1]))
    for c in range(num_classes):
        members = grads[labels == c]
        if members.shape[0] == 0:
            raise UsageError(f"class {c} has no samples")
        means[c] = members.mean(axis=0)
    return means


def _unit(rows: FloatArray) -> FloatArray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)


def class_cosine_report(
    normalized_grads: FloatArray,
    labels: np.ndarray,
    means: FloatArray | None = None,
) -> CosineReport:
    """
    Cosine of each gradient to its class mean, and to the other class means.

    Args:
        normalized_grads: (n, |θ|) gradients
        labels: Class per row
        means: (C, |θ|) class means to compare against; computed from
            ``normalized_grads`` when omitted (pass train means for a test split)

    Returns:
        CosineReport: Per-class, global within-class and cross-class averages.
        Zero vectors have cosine 0 to everything.
    """
    grads = np.asarray(normalized_grads, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if grads.ndim != 2 or y.shape != (grads.shape[0],) or y.size == 0:
        raise ConfigurationError(
            f"expected (n, |θ|) gradients with n labels, got {grads.shape} / {y.shape}"
        )
    if means is None:
        means = class_means(grads, y, int(y.max()) + 1)
    num_classes = means.shape[0]
    if int(y.max()) >= num_classes:
        raise UsageError(f"label {int(y.max())} has no class mean")

    cosines = _unit(grads) @ _unit(means).T
    own = cosines[np.arange(y.size), y]
    if num_classes > 1:
        others = (cosines.sum(axis=1) - own) / (num_classes - 1)
    else:
        others = np.zeros_like(own)
    per_class = [
        float(own[y == c].mean()) if np.any(y == c) else 0.0 for c in range(num_classes)
    ]
    return CosineReport(
        per_class=per_class,
        within_class=float(own.mean()),
        cross_class=float(others.mean()),
    )
