"""
Tests for logit score functions, the ensemble and the decision rule.
"""

import math

import numpy as np
import pytest

from grad_subspace_ood.detectors.scores import (
    Decision,
    Score,
    classify,
    energy_scores,
    ensemble_scores,
    msp_scores,
    score_energy,
    score_ensemble,
    score_msp,
)
from grad_subspace_ood.utils.errors import UsageError


@pytest.fixture
def random_logits() -> list[np.ndarray]:
    """1000 random logit vectors over 2 to 10 classes."""
    gen = np.random.default_rng(42)
    return [gen.normal(0.0, 5.0, size=int(gen.integers(2, 11))) for _ in range(1000)]


@pytest.mark.unit
def test_msp_examples() -> None:
    """
    Uniform logits give 1/C and well-separated logits saturate.

    Returns:
        None: Verifies the two worked cases
    """
    assert score_msp(np.array([0.0, 0.0])).value == pytest.approx(0.5, abs=1e-15)
    saturated = score_msp(np.array([10.0, -10.0])).value
    assert saturated >= 1 - 1e-8
    assert saturated == pytest.approx(1.0 / (1.0 + math.exp(-20.0)), rel=1e-15)


@pytest.mark.unit
def test_msp_range_and_shift_invariance(random_logits) -> None:
    """
    MSP lies in (1/C, 1] and ignores a constant shift of the logits.

    Returns:
        None: Verifies both properties on 1000 random vectors
    """
    gen = np.random.default_rng(7)
    for logits in random_logits:
        value = score_msp(logits).value
        assert 1.0 / logits.size < value <= 1.0
        shifted = score_msp(logits + gen.uniform(-50, 50)).value
        assert shifted == pytest.approx(value, abs=1e-12)


@pytest.mark.unit
def test_energy_examples() -> None:
    """
    Zero logits at T=1 give -log 2.

    Returns:
        None: Verifies the worked case and the temperature guard
    """
    assert score_energy(np.zeros(2)).value == pytest.approx(-math.log(2), abs=1e-12)
    with pytest.raises(UsageError):
        energy_scores(np.zeros(2), temperature=0.0)


@pytest.mark.unit
def test_energy_shift_equivariance(random_logits) -> None:
    """
    Adding c to every logit lowers the energy score by exactly c.

    Returns:
        None: Verifies the shift property on 1000 random vectors
    """
    gen = np.random.default_rng(8)
    for logits in random_logits:
        c = gen.uniform(-10, 10)
        before = score_energy(logits).value
        after = score_energy(logits + c).value
        assert after == pytest.approx(before - c, abs=1e-12)


@pytest.mark.unit
def test_energy_matches_extended_precision(rng) -> None:
    """
    T=2 scores agree with a long-double evaluation of the direct formula.

    Returns:
        None: Verifies 50 random rows
    """
    logits = rng.normal(0.0, 3.0, size=(50, 6))
    expected = -2.0 * np.log(np.sum(np.exp(logits.astype(np.longdouble) / 2), axis=1))
    np.testing.assert_allclose(
        energy_scores(logits, 2.0), expected.astype(np.float64), rtol=1e-12
    )


@pytest.mark.unit
def test_batched_scores_match_single(rng) -> None:
    """
    Row-wise batch scores equal the single-vector score functions.

    Returns:
        None: Verifies msp and energy over a random batch
    """
    logits = rng.standard_normal((20, 4))
    msp, energy = msp_scores(logits), energy_scores(logits)
    for i, row in enumerate(logits):
        assert msp[i] == pytest.approx(score_msp(row).value, rel=1e-14)
        assert energy[i] == pytest.approx(score_energy(row).value, rel=1e-14)


@pytest.mark.unit
def test_ensemble_examples() -> None:
    """
    Ensembling is s_forward + α·s_backward.

    Returns:
        None: Verifies α=0, the worked sum and linearity
    """
    assert score_ensemble(Score(1.5), Score(-7.0), alpha=0.0).value == 1.5
    assert score_ensemble(Score(1.0), Score(2.0), alpha=1.0).value == 3.0
    a, b, c, d = (np.array([v]) for v in (0.3, -1.2, 2.5, 0.7))
    alpha = 0.4
    lhs = ensemble_scores(a, b, alpha) + ensemble_scores(c, d, alpha)
    np.testing.assert_allclose(lhs, ensemble_scores(a + c, b + d, alpha), rtol=1e-15)


@pytest.mark.unit
def test_ensemble_rejects_misaligned_streams() -> None:
    """
    Score streams of different lengths cannot be combined.

    Returns:
        None: Verifies the shape check
    """
    with pytest.raises(UsageError):
        ensemble_scores(np.zeros(3), np.zeros(4))


@pytest.mark.unit
def test_classify_boundary() -> None:
    """
    A score at the threshold is ID; just below it is OOD.

    Returns:
        None: Verifies the inclusive decision rule
    """
    assert classify(Score(0.9), 0.5) == Decision.ID
    assert classify(0.5, 0.5) == Decision.ID
    assert classify(np.nextafter(0.5, -np.inf), 0.5) == Decision.OOD


@pytest.mark.unit
def test_score_must_be_finite() -> None:
    """
    Non-finite scores are rejected.

    Returns:
        None: Verifies the Score invariant
    """
    with pytest.raises(UsageError):
        Score(float("nan"))
    with pytest.raises(UsageError):
        Score(float("-inf"))
