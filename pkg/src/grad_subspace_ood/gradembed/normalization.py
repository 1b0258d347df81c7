"""
Label-free energy, raw gradients and their training-set normalization.

G(x) = diag(I)^{-1/2} (∇_θE(x;θ) − M), with M the training mean of raw
gradients and I the diagonal of the centered second moment.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from grad_subspace_ood.config import get_settings
from grad_subspace_ood.micronet.autodiff import (
    forward,
    per_sample_energy_gradient,
    per_sample_energy_gradients,
)
from grad_subspace_ood.micronet.model import (
    FloatArray,
    ModelSpec,
    ParamVector,
    SampleBatch,
)
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError
from grad_subspace_ood.utils.logger import logger
from grad_subspace_ood.utils.parallel import chunk_slices, ordered_map

DEFAULT_EPSILON = 1e-12


def _finite_vector(values: FloatArray, what: str) -> FloatArray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise ConfigurationError(f"{what} must be a vector")
    if not np.all(np.isfinite(array)):
        raise UsageError(f"{what} must be finite")
    return array


@dataclass(frozen=True)
class RawGradient:
    """∇_θE(x;θ) of one input."""

    values: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _finite_vector(self.values, "RawGradient"))


@dataclass(frozen=True)
class NormalizedGradient:
    """G(x) of one input."""

    values: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "values", _finite_vector(self.values, "NormalizedGradient")
        )


@dataclass(frozen=True)
class NormStats:
    """Training mean M and diagonal variance I of raw gradients."""

    mean: FloatArray
    var_diag: FloatArray
    epsilon: float = DEFAULT_EPSILON
    n_fit: int = 2

    def __post_init__(self) -> None:
        mean = _finite_vector(self.mean, "NormStats.mean")
        var = _finite_vector(self.var_diag, "NormStats.var_diag")
        if mean.shape != var.shape:
            raise ConfigurationError("NormStats mean and var_diag lengths differ")
        if np.any(var < 0):
            raise UsageError("NormStats var_diag must be non-negative")
        if not self.epsilon > 0:
            raise UsageError("NormStats epsilon must be positive")
        if self.n_fit < 2:
            raise UsageError("NormStats needs n_fit >= 2")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var_diag", var)

    @property
    def inv_scale(self) -> FloatArray:
        """diag(I)^{-1/2}, guarded by epsilon."""
        return 1.0 / np.sqrt(self.var_diag + self.epsilon)

    @property
    def size(self) -> int:
        return int(self.mean.size)

    def total_sq_norm(self) -> float:
        """
        Σ_i ‖G(x_i)‖² over the fit set, i.e. trace(GᵀG).

        Σ_i (g_ij − M_j)² equals n·I_j by construction, so the trace follows
        from the stored moments without another pass over the data.
        """
        retained = self.var_diag / (self.var_diag + self.epsilon)
        return float(self.n_fit * np.sum(retained))


def energy(spec: ModelSpec, params: ParamVector, x: FloatArray) -> float:
    """E(x;θ) = −log Σ_y exp f^y_θ(x), via a max-shifted log-sum-exp."""
    sample = _finite_vector(x, "x")
    logits = forward(spec, params, SampleBatch(sample[None, :]))
    return float(-logsumexp(logits[0]))


def energies(spec: ModelSpec, params: ParamVector, batch: SampleBatch) -> FloatArray:
    """Energies of every row of ``batch``."""
    return -logsumexp(forward(spec, params, batch), axis=1)


def embed_raw(spec: ModelSpec, params: ParamVector, x: FloatArray) -> RawGradient:
    """Raw label-free gradient of one input."""
    return RawGradient(per_sample_energy_gradient(spec, params, x))


def embed_raw_batch(
    spec: ModelSpec, params: ParamVector, batch: SampleBatch
) -> FloatArray:
    """Raw gradients of every row, shape (n, |θ|)."""
    return per_sample_energy_gradients(spec, params, batch)


def fit_norm_stats(
    spec: ModelSpec,
    params: ParamVector,
    train_data: SampleBatch,
    epsilon: float = DEFAULT_EPSILON,
    chunk_size: int | None = None,
    threads: int | None = None,
) -> NormStats:
    """
    Fit M and diag(I) on training data.

    One streaming pass per quantity: the mean, then the centered second
    moment (1/n normalization). Chunk partials are reduced in chunk order.

    Raises:
        UsageError: Fewer than two samples
    """
    n = len(train_data)
    if n < 2:
        raise UsageError(f"fit_norm_stats needs at least 2 samples, got {n}")
    settings = get_settings()
    size = chunk_size or settings.CHUNK_SIZE
    workers = threads or settings.THREADS
    slices = chunk_slices(n, size)

    def gradients(rows: slice) -> FloatArray:
        return per_sample_energy_gradients(
            spec, params, train_data.subset(rows), chunk_size=size, threads=1
        )

    total = np.zeros(spec.num_params)
    for part in ordered_map(lambda rows: gradients(rows).sum(axis=0), slices, workers):
        total += part
    mean = total / n

    second = np.zeros(spec.num_params)
    for part in ordered_map(
        lambda rows: np.square(gradients(rows) - mean).sum(axis=0), slices, workers
    ):
        second += part
    var_diag = second / n

    logger.info(
        f"Fitted norm stats on {n} samples: "
        f"{int(np.count_nonzero(var_diag))}/{var_diag.size} dims with variance"
    )
    return NormStats(mean, var_diag, epsilon, n)


def normalize(raw: RawGradient, stats: NormStats) -> NormalizedGradient:
    """out_j = (raw_j − M_j) / sqrt(I_j + ε)."""
    if raw.values.size != stats.size:
        raise ConfigurationError(
            f"gradient length {raw.values.size} does not match stats {stats.size}"
        )
    return NormalizedGradient((raw.values - stats.mean) * stats.inv_scale)


def normalize_batch(raw: FloatArray, stats: NormStats) -> FloatArray:
    """Row-wise ``normalize`` of an (n, |θ|) matrix."""
    matrix = np.asarray(raw, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != stats.size:
        raise ConfigurationError(
            f"expected (n, {stats.size}) gradients, got {matrix.shape}"
        )
    return (matrix - stats.mean) * stats.inv_scale
