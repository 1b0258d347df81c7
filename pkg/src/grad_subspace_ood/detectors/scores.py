"""
Score functions on logits plus the ensemble and decision rule.

Higher scores mean more ID-like everywhere.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp, softmax

from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import UsageError


class Decision(str, Enum):
    """Outcome of thresholding a score."""

    ID = "id"
    OOD = "ood"


@dataclass(frozen=True)
class Score:
    """One detector score."""

    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise UsageError(f"score must be finite, got {self.value}")
        object.__setattr__(self, "value", float(self.value))

    def __float__(self) -> float:
        return self.value


def _logit_rows(logits: FloatArray) -> FloatArray:
    rows = np.asarray(logits, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[1] < 1:
        raise UsageError(f"expected logits of shape (C,) or (n, C), got {rows.shape}")
    return rows


def msp_scores(logits: FloatArray) -> FloatArray:
    """max_j softmax(logits)_j per row."""
    return softmax(_logit_rows(logits), axis=1).max(axis=1)


def energy_scores(logits: FloatArray, temperature: float = 1.0) -> FloatArray:
    """−T·log Σ_j exp(logits_j / T) per row, max-shifted."""
    if not temperature > 0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    return -temperature * logsumexp(_logit_rows(logits) / temperature, axis=1)


def score_msp(logits: FloatArray) -> Score:
    return Score(float(msp_scores(logits)[0]))


def score_energy(logits: FloatArray, temperature: float = 1.0) -> Score:
    return Score(float(energy_scores(logits, temperature)[0]))


def ensemble_scores(
    s_forward: FloatArray, s_backward: FloatArray, alpha: float = 1.0
) -> FloatArray:
    """s_forward + α·s_backward, element-wise."""
    forward = np.asarray(s_forward, dtype=np.float64)
    backward = np.asarray(s_backward, dtype=np.float64)
    if forward.shape != backward.shape:
        raise UsageError(
            f"score streams differ in shape: {forward.shape} vs {backward.shape}"
        )
    return forward + alpha * backward


def score_ensemble(s_forward: Score, s_backward: Score, alpha: float = 1.0) -> Score:
    return Score(s_forward.value + alpha * s_backward.value)


def classify(score: Score | float, threshold: float) -> Decision:
    """ID iff score ≥ λ."""
    return Decision.ID if float(score) >= threshold else Decision.OOD
