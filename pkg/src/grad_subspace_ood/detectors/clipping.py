"""
Tail-dimension rectification applied between BN and FC of the linear head.

ReAct caps values above a percentile threshold c. BATS snaps values outside
the typical set [μ − λδ, μ + λδ] to its boundary and leaves the rest as is.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from grad_subspace_ood.config.config import ClipMethod
from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError


class ClipConfig(BaseModel):
    """Which rectification to apply and to how many trailing dimensions."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: ClipMethod = Field(default=ClipMethod.NONE)
    tail_dims: int = Field(default=50, ge=1, description="Trailing dimensions d")
    percentile: float = Field(default=70.0, gt=0.0, le=100.0)
    bats_lambda: float = Field(default=0.1, gt=0.0)


@dataclass(frozen=True)
class ClipState:
    """Fitted clipping state: the ReAct threshold or the BATS typical set."""

    threshold: float | None = None
    mu: FloatArray | None = None
    delta: FloatArray | None = None


def fit_react_threshold(values: FloatArray, percentile: float) -> float:
    """
    Nearest-rank percentile of the pooled values.

    Args:
        values: Post-BN tail values of ID data, any shape
        percentile: p in (0, 100]

    Returns:
        float: The ⌈p/100 · N⌉-th smallest value

    Raises:
        UsageError: Empty input or p out of range
    """
    pooled = np.sort(np.asarray(values, dtype=np.float64).ravel(), kind="stable")
    if pooled.size == 0:
        raise UsageError("cannot fit a ReAct threshold on empty input")
    if not 0.0 < percentile <= 100.0:
        raise UsageError(f"percentile must lie in (0, 100], got {percentile}")
    # exact rational rank; p/100 · N in floats can land just above an integer
    rank = max(1, math.ceil(Fraction(str(percentile)) * pooled.size / 100))
    return float(pooled[min(rank, pooled.size) - 1])


def clip_react(g_tail: FloatArray, threshold: float) -> FloatArray:
    """min(g, c) element-wise."""
    return np.minimum(np.asarray(g_tail, dtype=np.float64), threshold)


def clip_bats(
    g_tail: FloatArray, mu: FloatArray, delta: FloatArray, lam: float
) -> FloatArray:
    """
    Three-branch BATS rectification.

    g − μ ≥ λδ maps to μ + λδ, g − μ ≤ −λδ maps to μ − λδ, anything in
    between passes through unchanged (it is already the BN output).

    Raises:
        UsageError: Any δ ≤ 0 or λ ≤ 0
    """
    g = np.asarray(g_tail, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise UsageError("BATS delta must be positive")
    if not lam > 0:
        raise UsageError("BATS lambda must be positive")
    bound = lam * delta
    diff = g - mu
    return np.where(diff >= bound, mu + bound, np.where(diff <= -bound, mu - bound, g))


def clip_tail(
    normed: FloatArray, clip: ClipConfig, state: ClipState | None
) -> FloatArray:
    """
    Apply ``clip`` to the last d columns of post-BN values.

    Leading columns are returned bitwise unchanged.

    Raises:
        ConfigurationError: d exceeds the embedding width
        UsageError: Required clip state is missing
    """
    if clip.method == ClipMethod.NONE:
        return normed
    k = normed.shape[-1]
    if clip.tail_dims > k:
        raise ConfigurationError(f"tail_dims d={clip.tail_dims} exceeds K={k}")
    out = np.array(normed, dtype=np.float64, copy=True)
    tail = out[..., k - clip.tail_dims :]
    if clip.method == ClipMethod.REACT:
        if state is None or state.threshold is None:
            raise UsageError("react clipping needs a fitted threshold")
        out[..., k - clip.tail_dims :] = clip_react(tail, state.threshold)
    else:
        if state is None or state.mu is None or state.delta is None:
            raise UsageError("bats clipping needs fitted mu and delta")
        out[..., k - clip.tail_dims :] = clip_bats(
            tail, state.mu, state.delta, clip.bats_lambda
        )
    return out
