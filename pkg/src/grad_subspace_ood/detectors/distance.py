"""
Distance-based detectors: Mahalanobis with a shared covariance, and the
k-th nearest neighbour distance to a training bank.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve

from grad_subspace_ood.config.config import CovarianceMode
from grad_subspace_ood.detectors.scores import Score
from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError
from grad_subspace_ood.utils.logger import logger
from grad_subspace_ood.utils.parallel import chunk_slices

# Rows of test embeddings scored per distance block
_KNN_BLOCK = 256


def _rows(values: FloatArray, k: int, what: str) -> FloatArray:
    g = np.asarray(values, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2 or g.shape[1] != k:
        raise ConfigurationError(f"{what}: expected width {k}, got shape {g.shape}")
    return g


@dataclass(frozen=True)
class MahaModel:
    """Class means and the ridge-regularized shared covariance."""

    class_means: FloatArray
    shared_cov: FloatArray
    cov_factor: tuple[FloatArray, bool] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        means = np.asarray(self.class_means, dtype=np.float64)
        cov = np.asarray(self.shared_cov, dtype=np.float64)
        k = means.shape[1] if means.ndim == 2 else -1
        if k < 1 or cov.shape != (k, k):
            raise ConfigurationError(
                f"class_means {means.shape} and shared_cov {cov.shape} disagree"
            )
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise UsageError("shared covariance must be symmetric")
        try:
            factor = cho_factor(cov, lower=True)
        except LinAlgError as e:
            raise UsageError("shared covariance is not positive definite") from e
        object.__setattr__(self, "class_means", means)
        object.__setattr__(self, "shared_cov", cov)
        object.__setattr__(self, "cov_factor", factor)

    @property
    def k(self) -> int:
        return int(self.class_means.shape[1])


def fit_maha(
    embeddings: FloatArray,
    labels: np.ndarray,
    ridge_scale: float = 1e-6,
    covariance: CovarianceMode = CovarianceMode.POOLED,
    num_classes: int | None = None,
) -> MahaModel:
    """
    Class means and one shared covariance plus a ridge.

    The ridge is ``ridge_scale · trace(Σ̂) / K``, or ``ridge_scale`` itself when
    the trace is zero.

    Args:
        embeddings: (n, K) training embeddings
        labels: Class per row
        ridge_scale: Relative ridge strength
        covariance: Pooled within-class or global covariance
        num_classes: C; defaults to max(label) + 1

    Raises:
        UsageError: A label lies outside [0, C) or a class has fewer than two
            samples
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ConfigurationError(
            f"expected (n, K) embeddings and n labels, got {x.shape} / {y.shape}"
        )
    n, k = x.shape
    c = num_classes or int(y.max()) + 1
    if y.size and (int(y.min()) < 0 or int(y.max()) >= c):
        raise UsageError(
            f"labels must lie in [0, {c}), got range [{int(y.min())}, {int(y.max())}]"
        )
    counts = np.bincount(y, minlength=c)
    for label, count in enumerate(counts):
        if count < 2:
            raise UsageError(f"class {label} has {count} samples; Mahalanobis needs 2")

    means = np.stack([x[y == label].mean(axis=0) for label in range(c)])
    if covariance == CovarianceMode.POOLED:
        centered = x - means[y]
    else:
        centered = x - x.mean(axis=0)
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    trace = float(np.trace(cov))
    ridge = ridge_scale * trace / k if trace > 0 else ridge_scale
    cov += ridge * np.eye(k)
    logger.debug(f"Fitted Mahalanobis model C={c} K={k} ridge={ridge:.3e}")
    return MahaModel(means, cov)


def maha_scores(model: MahaModel, embeddings: FloatArray) -> FloatArray:
    """max_c −(g − μ_c)ᵀ Σ̂⁻¹ (g − μ_c) per row, solved through the Cholesky factor."""
    g = _rows(embeddings, model.k, "maha_scores")
    diffs = g[:, None, :] - model.class_means[None, :, :]
    flat = diffs.reshape(-1, model.k)
    solved = cho_solve(model.cov_factor, flat.T).T
    distances = np.sum(flat * solved, axis=1).reshape(g.shape[0], -1)
    return -np.maximum(distances, 0.0).min(axis=1)


def score_maha(model: MahaModel, g: FloatArray) -> Score:
    return Score(float(maha_scores(model, g)[0]))


@dataclass(frozen=True)
class KnnModel:
    """Bank of training embeddings searched exhaustively."""

    bank: FloatArray
    k: int
    normalize: bool = False

    def __post_init__(self) -> None:
        bank = np.asarray(self.bank, dtype=np.float64)
        if bank.ndim != 2 or bank.shape[0] < 1:
            raise ConfigurationError(
                f"bank must be a non-empty matrix, got {bank.shape}"
            )
        if not np.all(np.isfinite(bank)):
            raise UsageError("bank must be finite")
        if not 1 <= self.k <= bank.shape[0]:
            raise UsageError(f"knn k={self.k} must lie in [1, {bank.shape[0]}]")
        object.__setattr__(self, "bank", bank)

    @property
    def dim(self) -> int:
        return int(self.bank.shape[1])


def _unit_rows(values: FloatArray) -> FloatArray:
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    return np.divide(values, norms, out=np.zeros_like(values), where=norms > 0)


def knn_scores(model: KnnModel, embeddings: FloatArray) -> FloatArray:
    """−‖g − ĝ_(k)‖ per row, by brute force over the bank."""
    g = _rows(embeddings, model.dim, "knn_scores")
    bank = model.bank
    if model.normalize:
        g, bank = _unit_rows(g), _unit_rows(bank)
    out = np.empty(g.shape[0])
    for rows in chunk_slices(g.shape[0], _KNN_BLOCK):
        diffs = g[rows, None, :] - bank[None, :, :]
        distances = np.sqrt(np.sum(diffs * diffs, axis=2))
        # stable sort keeps bank order among equal distances
        ordered = np.sort(distances, axis=1, kind="stable")
        out[rows] = -ordered[:, model.k - 1]
    return out


def score_knn(model: KnnModel, g: FloatArray) -> Score:
    return Score(float(knn_scores(model, g)[0]))
