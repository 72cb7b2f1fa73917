"""Uplink-downlink duality for the wideband multiuser channel.

A set of uplink covariances ``S[u, k]`` (R x R) is mapped to downlink
covariances ``Q[u, k] = Delta[u, k] S[u, k] Delta[u, k]^H`` (M x M) that
achieve the same sum-rate with the same total power. The uplink is decoded
in user order 0..U-1 (user ``u`` sees interference from users ``i > u``);
the matching downlink has user ``u`` interfered only by users ``i < u``.
Users are processed sequentially, every subcarrier independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from ._linalg import herm, hermitian_power, min_eigenvalue
from .sysmodel import ChannelRealization

__all__ = [
    "PreconditionError",
    "CovarianceSet",
    "ConversionState",
    "gram_terms",
    "effective_channel",
    "effective_channels",
    "conversion_matrices",
]

PSD_TOL = 1e-10

ChannelLike = Union[ChannelRealization, np.ndarray]


class PreconditionError(ValueError):
    """Input matrices violate a documented precondition (e.g. not PSD)."""


def _channel_array(channels: ChannelLike) -> np.ndarray:
    H = channels.H if isinstance(channels, ChannelRealization) else np.asarray(channels)
    if H.ndim != 4:
        raise ValueError("channels must have shape (U, K, R, M)")
    return H


@dataclass(frozen=True)
class CovarianceSet:
    """Per-user, per-subcarrier transmit covariances, shape (U, K, n, n)."""

    side: Literal["uplink", "downlink"]
    mats: np.ndarray

    @property
    def total_power(self) -> float:
        return float(np.real(np.trace(self.mats, axis1=-2, axis2=-1)).sum())

    def traces(self) -> np.ndarray:
        return np.real(np.trace(self.mats, axis1=-2, axis2=-1))

    def check(self, P_tx: float | None = None, tol: float = PSD_TOL) -> None:
        """Raise :class:`PreconditionError` unless Hermitian PSD (and within power)."""
        m = self.mats
        if not np.all(np.isfinite(m)):
            raise PreconditionError("covariances contain non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
        if np.max(np.abs(m - herm(m)), initial=0.0) > tol * scale:
            raise PreconditionError("covariances are not Hermitian")
        if min_eigenvalue(m) < -tol * scale:
            raise PreconditionError("covariances are not positive semidefinite")
        if P_tx is not None and self.total_power > P_tx + 1e-8:
            raise PreconditionError("covariances exceed the power budget")


@dataclass(frozen=True)
class ConversionState:
    """Auxiliary duality matrices per (u, k).

    ``A`` (R x R) collects downlink interference from earlier users, ``B``
    (M x M) uplink interference from later users, ``Delta`` (M x R) maps
    uplink covariances to downlink ones.
    """

    A: np.ndarray
    B: np.ndarray
    Delta: np.ndarray


def gram_terms(H: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``H^H S H`` for every (u, k), shape (U, K, M, M)."""
    return herm(H) @ S @ H


def effective_channel(H_u: np.ndarray, H_others: np.ndarray,
                      S_others: np.ndarray) -> np.ndarray:
    """Right-whitened channel ``H_u (sum_i H_i^H S_i H_i + I)^(-1/2)`` at one subcarrier.

    ``H_others`` has shape (n, R, M) and ``S_others`` (n, R, R) for the
    ``n`` interfering users.
    """
    S_others = np.asarray(S_others)
    if S_others.size and min_eigenvalue(S_others) < -PSD_TOL * max(1.0, np.abs(S_others).max()):
        raise PreconditionError("interferer covariances must be PSD")
    M = H_u.shape[-1]
    interference = np.eye(M) + np.sum(gram_terms(np.asarray(H_others), S_others), axis=0)
    return H_u @ hermitian_power(interference, -0.5)


def effective_channels(channels: ChannelLike, S: np.ndarray) -> np.ndarray:
    """Effective channels of all users on all subcarriers, shape (U, K, R, M)."""
    H = _channel_array(channels)
    S = np.asarray(S)
    if min_eigenvalue(S) < -PSD_TOL * max(1.0, np.abs(S).max()):
        raise PreconditionError("uplink covariances must be PSD")
    M = H.shape[-1]
    G = gram_terms(H, S)
    total = G.sum(axis=0)
    whitener = hermitian_power(np.eye(M) + total[None] - G, -0.5)
    return H @ whitener


def conversion_matrices(channels: ChannelLike,
                        ul_covs: CovarianceSet) -> tuple[ConversionState, CovarianceSet]:
    """Sequentially convert uplink covariances into downlink ones.

    For u = 0..U-1 and every k: ``A_u = I + sum_{i<u} H_u Q_i H_u^H``,
    ``B_u = I + sum_{i>u} H_i^H S_i H_i``, ``F Xi G^H`` the economy SVD of
    ``B_u^{-1/2} H_u^H A_u^{-1/2}``, ``Delta_u = B_u^{-1/2} F G^H A_u^{1/2}``
    and ``Q_u = Delta_u S_u Delta_u^H``.
    """
    if ul_covs.side != "uplink":
        raise PreconditionError("conversion expects uplink covariances")
    H = _channel_array(channels)
    S = ul_covs.mats
    U, K, R, M = H.shape
    if S.shape != (U, K, R, R):
        raise PreconditionError(f"uplink covariances must have shape {(U, K, R, R)}")
    ul_covs.check()

    G = gram_terms(H, S)
    # suffix sums: later[u] = sum_{i>u} G_i
    later = np.zeros_like(G)
    if U > 1:
        later[:-1] = np.cumsum(G[::-1], axis=0)[::-1][1:]

    A = np.empty((U, K, R, R), dtype=complex)
    B = np.eye(M) + later
    Delta = np.empty((U, K, M, R), dtype=complex)
    Q = np.empty((U, K, M, M), dtype=complex)
    Q_sum = np.zeros((K, M, M), dtype=complex)

    B_isqrt = hermitian_power(B, -0.5)
    for u in range(U):
        Hu = H[u]
        A[u] = np.eye(R) + Hu @ Q_sum @ herm(Hu)
        A_isqrt = hermitian_power(A[u], -0.5)
        A_sqrt = hermitian_power(A[u], 0.5)
        X = B_isqrt[u] @ herm(Hu) @ A_isqrt
        F, _, Gh = np.linalg.svd(X, full_matrices=False)
        Delta[u] = B_isqrt[u] @ F @ Gh @ A_sqrt
        Q[u] = Delta[u] @ S[u] @ herm(Delta[u])
        Q[u] = 0.5 * (Q[u] + herm(Q[u]))
        Q_sum += Q[u]

    state = ConversionState(A=A, B=B, Delta=Delta)
    assert np.all(np.isfinite(Delta)), "conversion produced non-finite matrices"
    return state, CovarianceSet("downlink", Q)
