"""
Tests for threshold calibration, FPR95, AUROC and histograms.
"""

import numpy as np
import pytest

from grad_subspace_ood.evaluation.metrics import (
    auroc,
    calibrate_lambda,
    fpr95,
    fpr_at_threshold,
    histogram,
)
from grad_subspace_ood.utils.errors import UsageError


def _pairwise_auroc(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    wins = 0.0
    for s in id_scores:
        for t in ood_scores:
            wins += 1.0 if s > t else 0.5 if s == t else 0.0
    return wins / (id_scores.size * ood_scores.size)


def _sweep_lambda(id_scores: np.ndarray, tpr_target: float = 0.95) -> float:
    """Largest candidate threshold that keeps the target share of ID at ≥ λ."""
    best = None
    for candidate in np.unique(id_scores):
        if np.mean(id_scores >= candidate) >= tpr_target:
            best = candidate
    assert best is not None
    return float(best)


@pytest.mark.unit
def test_calibrate_lambda_on_integers() -> None:
    """
    On 1..100 the threshold is 6 and exactly 95 scores reach it.

    Returns:
        None: Verifies the order statistic
    """
    scores = np.arange(1.0, 101.0)
    lam = calibrate_lambda(scores)
    assert lam == 6.0
    assert np.count_nonzero(scores >= lam) == 95


@pytest.mark.unit
def test_calibrate_lambda_ties() -> None:
    """
    Constant scores calibrate to that constant with full TPR.

    Returns:
        None: Verifies the all-ties case
    """
    scores = np.full(40, 2.5)
    assert calibrate_lambda(scores) == 2.5
    assert fpr_at_threshold(scores, 2.5) == 1.0


@pytest.mark.unit
@pytest.mark.parametrize("seed", range(10))
def test_calibrate_lambda_matches_sweep(seed: int) -> None:
    """
    The threshold is the largest candidate reaching the TPR target.

    Args:
        seed: Stream seed

    Returns:
        None: Verifies against an exhaustive threshold sweep
    """
    gen = np.random.default_rng(seed)
    scores = gen.standard_normal(int(gen.integers(20, 500)))
    lam = calibrate_lambda(scores)
    assert np.mean(scores >= lam) >= 0.95
    assert lam == _sweep_lambda(scores)


@pytest.mark.unit
def test_calibrate_lambda_preconditions() -> None:
    """
    Fewer than 20 scores or an empty stream are usage errors.

    Returns:
        None: Verifies the guards
    """
    with pytest.raises(UsageError):
        calibrate_lambda(np.arange(19.0))
    with pytest.raises(UsageError):
        calibrate_lambda(np.array([]))
    with pytest.raises(UsageError):
        calibrate_lambda(np.arange(30.0), tpr_target=1.0)


@pytest.mark.unit
def test_calibrate_lambda_exact_rank() -> None:
    """
    The calibration rank is exact where n · (1 − t) is an integer.

    Returns:
        None: Verifies t=0.55 on 100 scores and t=0.9 on 20 scores
    """
    assert calibrate_lambda(np.arange(100.0), tpr_target=0.55) == 45.0
    assert calibrate_lambda(np.arange(20.0), tpr_target=0.9) == 2.0
    assert calibrate_lambda(np.arange(100.0)[::-1], tpr_target=0.7) == 30.0


@pytest.mark.unit
def test_fpr95_examples() -> None:
    """
    OOD {0, 10} against ID 1..100 gives 0.5; fully separated OOD gives 0.

    Returns:
        None: Verifies both worked cases
    """
    id_scores = np.arange(1.0, 101.0)
    assert fpr95(id_scores, np.array([0.0, 10.0])) == 0.5
    assert fpr95(id_scores, np.array([-5.0, 0.0, 0.99])) == 0.0


@pytest.mark.unit
@pytest.mark.parametrize("seed", range(10))
def test_fpr95_matches_sweep(seed: int) -> None:
    """
    FPR95 equals the OOD share at or above the sweep-oracle threshold.

    Args:
        seed: Stream seed

    Returns:
        None: Verifies the brute-force oracle
    """
    gen = np.random.default_rng(100 + seed)
    id_scores = gen.normal(1.0, 1.0, size=int(gen.integers(20, 300)))
    ood_scores = gen.normal(0.0, 1.0, size=int(gen.integers(1, 300)))
    lam = _sweep_lambda(id_scores)
    expected = sum(1 for s in ood_scores if s >= lam) / ood_scores.size
    assert fpr95(id_scores, ood_scores) == expected


@pytest.mark.unit
def test_fpr95_monotonicity(rng) -> None:
    """
    Lowering every OOD score never raises the FPR.

    Returns:
        None: Verifies monotonicity in the OOD scores
    """
    id_scores = rng.standard_normal(200)
    ood_scores = rng.standard_normal(150)
    before = fpr95(id_scores, ood_scores)
    after = fpr95(id_scores, ood_scores - rng.uniform(0.0, 1.0, size=150))
    assert after <= before


@pytest.mark.unit
def test_auroc_examples() -> None:
    """
    Perfect separation gives 1, a single tie 0.5, one ordered pair of four 0.25.

    Returns:
        None: Verifies the worked cases
    """
    assert auroc(np.array([3.0, 4.0]), np.array([1.0, 2.0])) == 1.0
    assert auroc(np.array([1.0]), np.array([1.0])) == 0.5
    assert auroc(np.array([1.0, 3.0]), np.array([2.0, 4.0])) == 0.25
    with pytest.raises(UsageError):
        auroc(np.array([]), np.array([1.0]))


@pytest.mark.unit
@pytest.mark.parametrize("seed", range(100))
def test_auroc_matches_pairwise_oracle(seed: int) -> None:
    """
    The rank-sum statistic equals the O(n²) pair count, ties included.

    Args:
        seed: Instance seed

    Returns:
        None: Verifies exact equality on a random instance with ties
    """
    gen = np.random.default_rng(seed)
    n_id, n_ood = gen.integers(1, 251, size=2)
    id_scores = gen.integers(0, 30, size=n_id).astype(np.float64)
    ood_scores = gen.integers(-5, 25, size=n_ood).astype(np.float64)
    assert auroc(id_scores, ood_scores) == _pairwise_auroc(id_scores, ood_scores)


@pytest.mark.unit
def test_auroc_properties(rng) -> None:
    """
    Swapping streams complements AUROC; increasing transforms preserve it.

    Returns:
        None: Verifies symmetry and rank invariance on tie-free streams
    """
    a, b = rng.standard_normal(120), rng.standard_normal(80) + 0.5
    assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)
    assert auroc(np.exp(a / 3.0), np.exp(b / 3.0)) == auroc(a, b)


@pytest.mark.unit
def test_histogram_examples(rng) -> None:
    """
    Two bins over {0, 1, 2, 3} split at 1.5; equal values fill one bin.

    Returns:
        None: Verifies edges, counts and the length check
    """
    hist = histogram(np.array([0.0, 1.0, 2.0, 3.0]), bins=2)
    np.testing.assert_array_equal(hist.edges, [0.0, 1.5, 3.0])
    np.testing.assert_array_equal(hist.counts, [2, 2])
    flat = histogram(np.full(7, 4.2), bins=5)
    assert np.count_nonzero(flat.counts) == 1 and flat.counts.sum() == 7
    values = rng.standard_normal(997)
    assert histogram(values, bins=13).counts.sum() == 997

