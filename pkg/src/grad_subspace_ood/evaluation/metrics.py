"""
Threshold calibration, FPR95, AUROC and histograms.

Thresholds use nearest-rank order statistics without interpolation, and the
ID side is always ``score ≥ λ`` so calibration, FPR and the decision rule agree.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import UsageError

MIN_ID_SCORES = 20
TIE_CONVENTION = (
    "lambda is the floor(n_id*(1-tpr))-th ascending ID score (0-indexed, no "
    "interpolation); a sample is ID iff score >= lambda; AUROC gives ties 0.5"
)


def _stream(values: FloatArray, what: str) -> FloatArray:
    array = np.asarray(values, dtype=np.float64).ravel()
    if array.size == 0:
        raise UsageError(f"{what} scores are empty")
    if not np.all(np.isfinite(array)):
        raise UsageError(f"{what} scores must be finite")
    return array


def calibrate_lambda(id_scores: FloatArray, tpr_target: float = 0.95) -> float:
    """
    Largest nearest-rank threshold keeping at least ``tpr_target`` of ID at ≥ λ.

    Raises:
        UsageError: Fewer than 20 scores or target outside (0, 1)
    """
    scores = np.sort(_stream(id_scores, "ID"), kind="stable")
    if scores.size < MIN_ID_SCORES:
        raise UsageError(f"need at least {MIN_ID_SCORES} ID scores, got {scores.size}")
    if not 0.0 < tpr_target < 1.0:
        raise UsageError(f"tpr_target must lie in (0, 1), got {tpr_target}")
    # exact rational rank, same rule as the ReAct percentile
    index = math.floor(scores.size * (1 - Fraction(str(tpr_target))))
    return float(scores[min(index, scores.size - 1)])


def fpr_at_threshold(ood_scores: FloatArray, threshold: float) -> float:
    """Fraction of OOD scores classified ID (≥ threshold)."""
    ood = _stream(ood_scores, "OOD")
    return float(np.count_nonzero(ood >= threshold) / ood.size)


def fpr95(
    id_scores: FloatArray, ood_scores: FloatArray, tpr_target: float = 0.95
) -> float:
    """False-positive rate on OOD at the calibrated ID threshold."""
    return fpr_at_threshold(ood_scores, calibrate_lambda(id_scores, tpr_target))


def auroc(id_scores: FloatArray, ood_scores: FloatArray) -> float:
    """
    Mann-Whitney AUROC from average ranks; ties count one half.

    Raises:
        UsageError: Either stream empty
    """
    id_arr = _stream(id_scores, "ID")
    ood_arr = _stream(ood_scores, "OOD")
    ranks = rankdata(np.concatenate([id_arr, ood_arr]), method="average")
    n_id, n_ood = id_arr.size, ood_arr.size
    u_stat = float(np.sum(ranks[:n_id])) - n_id * (n_id + 1) / 2.0
    return u_stat / (n_id * n_ood)


@dataclass(frozen=True)
class Histogram:
    """Equal-width bins over [min, max]."""

    edges: FloatArray
    counts: np.ndarray


def histogram(values: FloatArray, bins: int = 30) -> Histogram:
    """
    Equal-width histogram of ``values``; counts sum to the input length.

    Identical values fall into one occupied bin.
    """
    data = _stream(values, "histogram")
    if bins < 1:
        raise UsageError(f"bins must be positive, got {bins}")
    counts, edges = np.histogram(data, bins=bins)
    return Histogram(edges=edges, counts=counts.astype(np.int64))
