"""Analog/digital factorization of full-digital precoders.

The analog precoder ``P_RF`` (M x N_RF) is shared by all users and
subcarriers and has constant-modulus entries ``1/sqrt(M)``. The digital
part ``P_BB[u, k]`` carries all power bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._linalg import herm
from .duality import CovarianceSet, PreconditionError

__all__ = [
    "PrecoderSet",
    "FactorizationResult",
    "precoders_from_covariance",
    "precoders_from_covariances",
    "hybrid_factorize",
    "quantize_phases",
    "factorize_covariances",
]

EIG_RTOL = 1e-10


@dataclass(frozen=True)
class PrecoderSet:
    """Hybrid precoders plus the full-digital ones they approximate.

    ``P_BB`` is (U, K, N_RF, N_s) and ``Theta`` is (U, K, M, N_s); users with
    fewer than ``N_s`` streams are padded with zero columns.
    """

    P_RF: np.ndarray
    P_BB: np.ndarray
    Theta: np.ndarray

    @property
    def modulus(self) -> float:
        return 1.0 / np.sqrt(self.P_RF.shape[0])

    @property
    def hybrid(self) -> np.ndarray:
        return self.P_RF @ self.P_BB

    @property
    def transmit_power(self) -> float:
        return float(np.sum(np.abs(self.hybrid) ** 2))


@dataclass
class FactorizationResult:
    precoders: PrecoderSet
    residuals: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def relative_residual(self) -> float:
        theta_energy = float(np.sum(np.abs(self.precoders.Theta) ** 2))
        return self.residuals[-1] / theta_energy if theta_energy > 0 else 0.0


def precoders_from_covariance(Q: np.ndarray, rtol: float = EIG_RTOL) -> np.ndarray:
    """``Theta = V sqrt(diag(lam))`` over eigenpairs above ``rtol * lam_max``.

    Eigenpairs come in descending order (ties keep their original order), so
    ``Q = I`` returns the identity. A zero matrix gives an (M, 0) array.
    """
    Q = np.asarray(Q)
    w, V = np.linalg.eigh(0.5 * (Q + herm(Q)))
    if w.size == 0 or w[-1] <= 0:
        return np.zeros((Q.shape[0], 0), dtype=complex)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    keep = w > rtol * w[0]
    return V[:, keep] * np.sqrt(w[keep])


def precoders_from_covariances(dl_covs: CovarianceSet,
                               rtol: float = EIG_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Precoders for every (u, k), zero-padded to a common stream count.

    Returns ``(Theta, n_streams)`` with ``Theta`` of shape (U, K, M, N_s).
    """
    if dl_covs.side != "downlink":
        raise PreconditionError("precoders are built from downlink covariances")
    Q = dl_covs.mats
    U, K, M, _ = Q.shape
    per = [[precoders_from_covariance(Q[u, k], rtol) for k in range(K)] for u in range(U)]
    n_streams = np.array([[p.shape[1] for p in row] for row in per], dtype=int)
    N_s = max(int(n_streams.max()), 1)
    Theta = np.zeros((U, K, M, N_s), dtype=complex)
    for u in range(U):
        for k in range(K):
            Theta[u, k, :, : n_streams[u, k]] = per[u][k]
    return Theta, n_streams


def _unit_phase(X: np.ndarray, fallback: np.ndarray, modulus: float) -> np.ndarray:
    mag = np.abs(X)
    out = modulus * X / np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, out, fallback)


def _digital_ls(P_RF: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(P_RF, X, rcond=None)[0]


def _stack(Theta: np.ndarray) -> np.ndarray:
    """(U, K, M, N) -> (M, U*K*N) with column order (u, k, n)."""
    return np.moveaxis(Theta, -2, 0).reshape(Theta.shape[-2], -1)


def _unstack(X: np.ndarray, shape: tuple) -> np.ndarray:
    U, K, _, N = shape
    return np.moveaxis(X.reshape(X.shape[0], U, K, N), 0, -2)


def quantize_phases(P_RF: np.ndarray, bits: Optional[int]) -> np.ndarray:
    """Snap each entry's phase to the nearest of ``2 pi m / 2**bits``; ``None`` is a no-op."""
    if bits is None:
        return np.array(P_RF, copy=True)
    if bits < 1:
        raise ValueError("bits must be >= 1")
    step = 2 * np.pi / 2 ** bits
    phase = np.round(np.angle(P_RF) / step) * step
    return np.abs(P_RF) * np.exp(1j * phase)


def hybrid_factorize(Theta: np.ndarray, N_RF: int, max_iter: int = 30, tol: float = 1e-6,
                     P_RF_init: Optional[np.ndarray] = None,
                     quant_bits: Optional[int] = None) -> FactorizationResult:
    """Fit ``Theta[u, k] ~ P_RF P_BB[u, k]`` with a constant-modulus ``P_RF``.

    Alternates an exact least-squares digital solve with an exact
    column-by-column phase update of ``P_RF`` (each column is the phase of
    the residual cross term ``E_n P_BB[n]^H``), so the residual never
    increases. The analog start is the phase of the ``N_RF`` dominant left
    singular vectors of the stacked ``Theta`` unless ``P_RF_init`` is given.
    Optional phase quantization is applied at the end, followed by one more
    digital refit. ``P_BB`` is finally scaled so the hybrid power equals
    ``sum ||Theta||_F^2``.
    """
    Theta = np.asarray(Theta, dtype=complex)
    if Theta.ndim != 4:
        raise ValueError("Theta must have shape (U, K, M, N_s)")
    if N_RF < 1:
        raise ValueError("N_RF must be >= 1")
    M = Theta.shape[-2]
    modulus = 1.0 / np.sqrt(M)
    X = _stack(Theta)
    target_power = float(np.sum(np.abs(X) ** 2))

    if P_RF_init is not None:
        P_RF = np.array(P_RF_init, dtype=complex)
        if P_RF.shape != (M, N_RF):
            raise ValueError(f"P_RF_init must have shape {(M, N_RF)}")
    else:
        left = np.linalg.svd(X, full_matrices=True)[0]
        P_RF = _unit_phase(left[:, :N_RF], modulus * np.ones((M, N_RF)), modulus)

    B = _digital_ls(P_RF, X)
    residuals = [float(np.sum(np.abs(X - P_RF @ B) ** 2))]
    converged = False
    for _ in range(max_iter):
        for n in range(N_RF):
            E = X - P_RF @ B + np.outer(P_RF[:, n], B[n])
            P_RF[:, n] = _unit_phase(E @ B[n].conj(), P_RF[:, n], modulus)
        B = _digital_ls(P_RF, X)
        residuals.append(float(np.sum(np.abs(X - P_RF @ B) ** 2)))
        prev = residuals[-2]
        if prev <= 0 or (prev - residuals[-1]) / prev < tol:
            converged = True
            break

    if quant_bits is not None:
        P_RF = quantize_phases(P_RF, quant_bits)
        B = _digital_ls(P_RF, X)
        residuals.append(float(np.sum(np.abs(X - P_RF @ B) ** 2)))

    power = float(np.sum(np.abs(P_RF @ B) ** 2))
    if power > 0:
        B = B * np.sqrt(target_power / power)
    P_BB = _unstack(B, Theta.shape[:2] + (N_RF, Theta.shape[-1]))
    return FactorizationResult(PrecoderSet(P_RF=P_RF, P_BB=P_BB, Theta=Theta),
                               residuals=residuals, converged=converged)


def factorize_covariances(dl_covs: CovarianceSet, N_RF: int,
                          quant_bits: Optional[int] = None, **kwargs) -> FactorizationResult:
    """Precoders from downlink covariances followed by :func:`hybrid_factorize`."""
    Theta, _ = precoders_from_covariances(dl_covs)
    return hybrid_factorize(Theta, N_RF, quant_bits=quant_bits, **kwargs)
