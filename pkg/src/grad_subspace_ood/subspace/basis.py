"""
Projection bases for normalized gradients: top-K principal components or
per-class mean gradients.
"""

from dataclasses import dataclass

import numpy as np

from grad_subspace_ood.config.config import SubspaceConfig, SubspaceKind
from grad_subspace_ood.gradembed.normalization import (
    NormalizedGradient,
    NormStats,
    fit_norm_stats,
)
from grad_subspace_ood.gradembed.operator import NormalizedGradientOperator
from grad_subspace_ood.micronet.model import (
    FloatArray,
    ModelSpec,
    ParamVector,
    SampleBatch,
)
from grad_subspace_ood.subspace.eigensolver import (
    block_power_iteration,
    gram_schmidt,
    orthonormality_error,
)
from grad_subspace_ood.utils.errors import (
    ConfigurationError,
    InvariantError,
    RankDeficiencyError,
    UnsupportedOperationError,
    UsageError,
)
from grad_subspace_ood.utils.logger import logger

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class Subspace:
    """
    Basis V (|θ| x K) together with the normalization it applies to.

    ``converged`` and ``iterations`` describe how a PCA basis was obtained
    and are informational only.
    """

    basis: FloatArray
    eigenvalues: FloatArray | None
    kind: SubspaceKind
    norm_stats: NormStats
    orthonormalized: bool
    total_variance: float | None = None
    converged: bool = True
    iterations: int = 0

    def __post_init__(self) -> None:
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] < 1:
            raise ConfigurationError(
                f"basis must be |θ| x K with K ≥ 1, got {basis.shape}"
            )
        if basis.shape[0] != self.norm_stats.size:
            raise ConfigurationError(
                f"basis has {basis.shape[0]} rows, "
                f"norm stats cover {self.norm_stats.size}"
            )
        if not np.all(np.isfinite(basis)):
            raise InvariantError("basis contains non-finite values")
        object.__setattr__(self, "basis", basis)
        if self.eigenvalues is not None:
            object.__setattr__(
                self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64)
            )

    @property
    def k(self) -> int:
        return int(self.basis.shape[1])

    @property
    def num_params(self) -> int:
        return int(self.basis.shape[0])

    def validate(self, tol: float = ORTHONORMAL_TOL) -> None:
        """
        Check the structural invariants of this kind of basis.

        Args:
            tol: Orthonormality tolerance on max |VᵀV − I|

        Raises:
            InvariantError: On any violation
        """
        if self.orthonormalized:
            error = orthonormality_error(self.basis)
            if error > tol:
                raise InvariantError(
                    f"basis flagged orthonormal but max |VᵀV − I| = {error:.3e} "
                    f"> {tol:g}"
                )
        if self.kind == SubspaceKind.PCA:
            if not self.orthonormalized:
                raise InvariantError("a pca subspace must be orthonormalized")
            if self.eigenvalues is None or self.eigenvalues.shape != (self.k,):
                raise InvariantError(f"a pca subspace needs {self.k} eigenvalues")
            if np.any(self.eigenvalues < 0) or np.any(np.diff(self.eigenvalues) > 0):
                raise InvariantError(
                    "eigenvalues must be nonnegative and nonincreasing"
                )
        elif self.eigenvalues is not None and self.eigenvalues.size:
            raise InvariantError("a class_mean subspace carries no eigenvalues")


@dataclass(frozen=True)
class Spectrum:
    """Explained-variance view of a PCA subspace."""

    eigenvalues: FloatArray
    explained_ratio: FloatArray
    cumulative_ratio: FloatArray
    total_variance: float


def extract_pca_subspace(
    spec: ModelSpec,
    params: ParamVector,
    train_data: SampleBatch,
    k: int,
    config: SubspaceConfig | None = None,
    stats: NormStats | None = None,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> Subspace:
    """
    Top-K eigenvectors of the normalized-gradient covariance GᵀG.

    The gradient matrix is never materialized: block power iteration runs
    on ``NormalizedGradientOperator``.

    Args:
        spec: Model architecture
        params: Trained parameters
        train_data: Inputs defining G and the norm stats
        k: Subspace dimension
        config: Iteration count, tolerance and seed
        stats: Precomputed norm stats; fitted on ``train_data`` when omitted
        chunk_size: Reduction chunk size
        threads: Worker cap

    Returns:
        Subspace: Orthonormal PCA basis with eigenvalues and total variance

    Raises:
        UsageError: If k is outside [1, min(n, |θ|)] or config.iters < 1
    """
    config = config or SubspaceConfig()
    n, num_params = len(train_data), spec.num_params
    if not 1 <= k <= min(n, num_params):
        raise UsageError(f"K={k} must lie in [1, min(n={n}, |θ|={num_params})]")
    if stats is None:
        stats = fit_norm_stats(
            spec, params, train_data, config.epsilon, chunk_size, threads
        )
    operator = NormalizedGradientOperator(
        spec, params, train_data, stats, chunk_size, threads
    )
    result = block_power_iteration(operator, k, config.iters, config.tol, config.seed)
    subspace = Subspace(
        basis=result.basis,
        eigenvalues=result.eigenvalues,
        kind=SubspaceKind.PCA,
        norm_stats=stats,
        orthonormalized=True,
        total_variance=stats.total_sq_norm(),
        converged=result.converged,
        iterations=result.iterations,
    )
    subspace.validate()
    logger.info(
        f"Extracted pca subspace K={k} over |θ|={num_params} "
        f"({result.iterations} steps, converged={result.converged})"
    )
    return subspace


def _class_counts(labels: np.ndarray, num_classes: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=num_classes)
    if counts.size > num_classes:
        raise UsageError(f"label {int(labels.max())} is outside 0..{num_classes - 1}")
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise UsageError(f"class {int(empty[0])} has no samples")
    return counts


def _finish_classmean(
    means: FloatArray, stats: NormStats, orthonormalize: bool
) -> Subspace:
    if orthonormalize:
        basis = gram_schmidt(means)
    else:
        basis = means
        if np.linalg.matrix_rank(means) < means.shape[1]:
            logger.warning(
                "Class-mean basis is rank deficient; projections share directions"
            )
    subspace = Subspace(
        basis=basis,
        eigenvalues=None,
        kind=SubspaceKind.CLASS_MEAN,
        norm_stats=stats,
        orthonormalized=orthonormalize,
    )
    subspace.validate()
    return subspace


def extract_classmean_subspace(
    normalized_grads: FloatArray,
    labels: np.ndarray,
    stats: NormStats,
    num_classes: int | None = None,
    orthonormalize: bool = False,
) -> Subspace:
    """
    Column c is the mean normalized gradient of class c.

    Args:
        normalized_grads: (n, |θ|) normalized gradients
        labels: Class index per row
        stats: Norm stats the gradients were normalized with
        num_classes: C; defaults to max(label) + 1
        orthonormalize: Gram-Schmidt the means

    Returns:
        Subspace: K = C basis

    Raises:
        UsageError: A class has no samples
        RankDeficiencyError: Orthonormalization of dependent means
    """
    grads = np.asarray(normalized_grads, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if grads.ndim != 2 or labels.shape != (grads.shape[0],):
        raise ConfigurationError(
            f"expected (n, |θ|) gradients with n labels, "
            f"got {grads.shape} / {labels.shape}"
        )
    if np.any(labels < 0):
        raise UsageError("labels must be non-negative")
    num_classes = num_classes or int(labels.max()) + 1
    counts = _class_counts(labels, num_classes)
    means = np.zeros((grads.shape[1], num_classes))
    for c in range(num_classes):
        means[:, c] = grads[labels == c].mean(axis=0)
    try:
        return _finish_classmean(means, stats, orthonormalize)
    except RankDeficiencyError as e:
        logger.error(
            f"Class-mean orthonormalization failed over {counts.size} classes: {e}"
        )
        raise


def extract_classmean_subspace_streaming(
    spec: ModelSpec,
    params: ParamVector,
    train_data: SampleBatch,
    stats: NormStats,
    orthonormalize: bool = False,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> Subspace:
    """
    Class-mean basis computed as Gᵀ(onehot / n_c) through the operator.

    Same result as ``extract_classmean_subspace`` without materializing G.
    """
    if train_data.labels is None:
        raise UsageError("class-mean subspace needs labelled training data")
    train_data.check_against(spec)
    counts = _class_counts(train_data.labels, spec.num_classes)
    weights = np.zeros((len(train_data), spec.num_classes))
    weights[np.arange(len(train_data)), train_data.labels] = 1.0
    weights /= counts[None, :]
    operator = NormalizedGradientOperator(
        spec, params, train_data, stats, chunk_size, threads
    )
    means = operator.rmatmat(weights)
    return _finish_classmean(means, stats, orthonormalize)


def project(sub: Subspace, g: NormalizedGradient) -> FloatArray:
    """Gradient embedding gᵀV, length K."""
    if g.values.size != sub.num_params:
        raise ConfigurationError(
            f"gradient length {g.values.size} "
            f"does not match basis rows {sub.num_params}"
        )
    return g.values @ sub.basis


def project_batch(sub: Subspace, normalized_grads: FloatArray) -> FloatArray:
    """Row-wise ``project`` of an (n, |θ|) matrix."""
    grads = np.asarray(normalized_grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[1] != sub.num_params:
        raise ConfigurationError(
            f"expected (n, {sub.num_params}) gradients, got {grads.shape}"
        )
    return grads @ sub.basis


def embed_projected(
    spec: ModelSpec,
    params: ParamVector,
    batch: SampleBatch,
    sub: Subspace,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> FloatArray:
    """
    Gradient embeddings G(x)V of every row of ``batch``, shape (n, K).

    Runs K tangent directions through the forward sweep instead of forming
    per-sample gradients.
    """
    operator = NormalizedGradientOperator(
        spec, params, batch, sub.norm_stats, chunk_size, threads
    )
    return operator.matmat(sub.basis)


def spectrum(sub: Subspace) -> Spectrum:
    """
    Explained-variance ratios of a PCA subspace.

    Raises:
        UnsupportedOperationError: For class-mean bases
        InvariantError: If the total variance is missing or zero
    """
    if sub.kind != SubspaceKind.PCA or sub.eigenvalues is None:
        raise UnsupportedOperationError("spectrum is only defined for pca subspaces")
    total = sub.total_variance
    if total is None or not total > 0:
        raise InvariantError("pca subspace has no positive total variance")
    ratio = sub.eigenvalues / total
    return Spectrum(
        eigenvalues=sub.eigenvalues.copy(),
        explained_ratio=ratio,
        cumulative_ratio=np.cumsum(ratio),
        total_variance=float(total),
    )
