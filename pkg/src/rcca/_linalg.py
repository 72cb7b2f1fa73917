"""Batched Hermitian helpers shared by the solver modules."""

import numpy as np

EIG_FLOOR = 1e-12


def herm(X: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(X, -1, -2))


def hermitize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + herm(X))


def hermitian_power(X: np.ndarray, power: float, floor: float = EIG_FLOOR) -> np.ndarray:
    """``X**power`` for (stacks of) Hermitian PSD matrices via eigendecomposition.

    Eigenvalues are clipped from below at ``floor`` so negative powers stay
    finite.
    """
    w, V = np.linalg.eigh(hermitize(X))
    w = np.maximum(w, floor) ** power
    return (V * w[..., None, :]) @ herm(V)


def log2det_pd(X: np.ndarray) -> np.ndarray:
    """log2 det of Hermitian positive-definite matrices through Cholesky."""
    L = np.linalg.cholesky(hermitize(X))
    diag = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log2(diag), axis=-1)


def numerical_rank(X: np.ndarray, rtol: float = 1e-8) -> int:
    """Count of singular values above ``rtol`` times the largest one."""
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def min_eigenvalue(X: np.ndarray) -> float:
    if X.size == 0:
        return 0.0
    return float(np.min(np.linalg.eigvalsh(hermitize(X))))
