"""
Block power iteration for the top-K eigenvectors of C = GᵀG.

G is only touched through ``matmat`` (Gv) and ``rmatmat`` (Gᵀu), so any
``scipy.sparse.linalg.LinearOperator`` works, matrix-free or dense.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, subspace_angles
from scipy.sparse.linalg import LinearOperator

from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import RankDeficiencyError, UsageError
from grad_subspace_ood.utils.logger import logger

RANK_TOL = 1e-10


def gram_schmidt(
    block: FloatArray,
    reorthogonalize: bool = True,
    rank_tol: float = RANK_TOL,
    fill_rng: np.random.Generator | None = None,
) -> FloatArray:
    """
    Modified Gram-Schmidt on the columns of ``block``.

    Args:
        block: (m, K) matrix
        reorthogonalize: Run the projection loop twice per column
        rank_tol: A column whose residual norm falls below ``rank_tol`` times
            its original norm counts as linearly dependent
        fill_rng: When given, dependent columns are replaced by random vectors
            instead of raising

    Returns:
        FloatArray: (m, K) matrix with orthonormal columns

    Raises:
        RankDeficiencyError: A column is dependent and no ``fill_rng`` is given
    """
    q = np.array(block, dtype=np.float64, copy=True)
    passes = 2 if reorthogonalize else 1
    for j in range(q.shape[1]):
        for attempt in range(3):
            original = float(np.linalg.norm(q[:, j]))
            for _ in range(passes):
                for i in range(j):
                    q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
            residual = float(np.linalg.norm(q[:, j]))
            if residual > 0.0 and residual > rank_tol * original:
                q[:, j] /= residual
                break
            if fill_rng is None or attempt == 2:
                raise RankDeficiencyError(
                    f"column {j} is linearly dependent on the preceding columns"
                )
            q[:, j] = fill_rng.standard_normal(q.shape[0])
    return q


def fix_signs(basis: FloatArray) -> FloatArray:
    """Flip each column so its first nonzero coordinate is positive."""
    fixed = basis.copy()
    for j in range(fixed.shape[1]):
        column = fixed[:, j]
        nonzero = np.flatnonzero(np.abs(column) > 0.0)
        if nonzero.size and column[nonzero[0]] < 0:
            fixed[:, j] = -column
    return fixed


def orthonormality_error(basis: FloatArray) -> float:
    """max |VᵀV − I|."""
    k = basis.shape[1]
    return float(np.max(np.abs(basis.T @ basis - np.eye(k)))) if k else 0.0


@dataclass(frozen=True)
class PowerIterationResult:
    """Top-K eigenpairs estimated by block power iteration."""

    basis: FloatArray
    eigenvalues: FloatArray
    converged: bool
    iterations: int


def block_power_iteration(
    operator: LinearOperator,
    k: int,
    iters: int = 30,
    tol: float = 1e-6,
    seed: int = 0,
) -> PowerIterationResult:
    """
    Top-K eigenvectors of GᵀG for the operator G of shape (n, m).

    Each step applies Gᵀ(G V) and re-orthonormalizes. Iteration stops early
    once the largest principal angle between successive bases drops below
    ``tol``. A final Rayleigh-Ritz rotation aligns columns with eigenvectors;
    eigenvalues are ‖G vⱼ‖², sorted nonincreasing.

    Args:
        operator: G, applied through ``matmat`` and ``rmatmat``
        k: Number of eigenpairs, 1 ≤ k ≤ min(n, m)
        iters: Maximum number of power steps T
        tol: Principal-angle convergence threshold (radians)
        seed: Seed of the random starting block

    Returns:
        PowerIterationResult: Basis (m, k), eigenvalues, convergence flag

    Raises:
        UsageError: If k or iters are out of range
    """
    n, m = operator.shape
    if not 1 <= k <= min(n, m):
        raise UsageError(f"K={k} must lie in [1, min(n={n}, |θ|={m})]")
    if iters < 1:
        raise UsageError(f"iteration count T must be at least 1, got {iters}")

    rng = np.random.default_rng(seed)
    basis = gram_schmidt(rng.standard_normal((m, k)), fill_rng=rng)
    converged = False
    steps = 0
    for steps in range(1, iters + 1):
        updated = operator.rmatmat(operator.matmat(basis))
        updated = gram_schmidt(updated, fill_rng=rng)
        angle = float(np.max(subspace_angles(basis, updated)))
        basis = updated
        logger.debug(f"power step {steps}: largest principal angle {angle:.3e}")
        if angle < tol:
            converged = True
            break

    # Rayleigh-Ritz: rotate within the span so columns are eigenvector estimates
    projected = operator.matmat(basis)
    ritz_values, ritz_vectors = eigh(projected.T @ projected)
    order = np.argsort(-ritz_values, kind="stable")
    basis = fix_signs(basis @ ritz_vectors[:, order])
    # Ritz values are ‖G vⱼ‖², already in sorted order
    eigenvalues = np.maximum(ritz_values[order], 0.0)

    if not converged:
        logger.warning(
            f"Block power iteration did not converge within {iters} steps (tol={tol})"
        )
    return PowerIterationResult(basis, eigenvalues, converged, steps)
