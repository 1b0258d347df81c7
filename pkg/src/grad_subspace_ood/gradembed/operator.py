"""
The normalized gradient matrix G (n x |θ|) as a matrix-free linear operator.

Rows are G(x_i) for the training inputs. Products never materialize G:

    G V   = JVP(diag(I)^{-1/2} V) − 1·(Mᵀ diag(I)^{-1/2} V)
    Gᵀ U  = diag(I)^{-1/2} (VJP(U) − M·(1ᵀU))
"""

import numpy as np
from scipy.sparse.linalg import LinearOperator

from grad_subspace_ood.gradembed.normalization import NormStats
from grad_subspace_ood.micronet.autodiff import param_jvp, param_vjp
from grad_subspace_ood.micronet.model import (
    FloatArray,
    ModelSpec,
    ParamVector,
    SampleBatch,
)
from grad_subspace_ood.utils.errors import ConfigurationError


class NormalizedGradientOperator(LinearOperator):
    """Matrix-free G built from the classifier's forward and reverse sweeps."""

    def __init__(
        self,
        spec: ModelSpec,
        params: ParamVector,
        data: SampleBatch,
        stats: NormStats,
        chunk_size: int | None = None,
        threads: int | None = None,
    ) -> None:
        if stats.size != spec.num_params:
            raise ConfigurationError(
                f"norm stats cover {stats.size} params, model has {spec.num_params}"
            )
        self.spec = spec
        self.params = params
        self.data = data
        self.stats = stats
        self.chunk_size = chunk_size
        self.threads = threads
        super().__init__(dtype=np.float64, shape=(len(data), spec.num_params))

    def _matmat(self, X: FloatArray) -> FloatArray:
        scaled = np.asarray(X, dtype=np.float64) * self.stats.inv_scale[:, None]
        jvp = param_jvp(
            self.spec,
            self.params,
            self.data,
            scaled,
            chunk_size=self.chunk_size,
            threads=self.threads,
        )
        return jvp - (self.stats.mean @ scaled)[None, :]

    def _rmatmat(self, X: FloatArray) -> FloatArray:
        weights = np.asarray(X, dtype=np.float64)
        vjp = param_vjp(
            self.spec,
            self.params,
            self.data,
            weights,
            chunk_size=self.chunk_size,
            threads=self.threads,
        )
        column_sums = weights.sum(axis=0)
        return self.stats.inv_scale[:, None] * (
            vjp - self.stats.mean[:, None] * column_sums[None, :]
        )

    def _matvec(self, x: FloatArray) -> FloatArray:
        return self._matmat(np.asarray(x).reshape(-1, 1))[:, 0]

    def _rmatvec(self, x: FloatArray) -> FloatArray:
        return self._rmatmat(np.asarray(x).reshape(-1, 1))[:, 0]
