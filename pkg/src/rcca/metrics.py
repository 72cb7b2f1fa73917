"""Achievable sum-rates for covariance sets and hybrid precoders.

All rates are in bits/s/Hz. :func:`uplink_sum_rate` returns the plain sum
over subcarriers; downlink reports carry the 1/K average, so
``uplink_sum_rate(S) / K`` and ``downlink_sum_rate(Q).sum_rate`` compare
like with like.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ._linalg import herm, log2det_pd
from .duality import CovarianceSet, PreconditionError, gram_terms
from .sysmodel import ChannelRealization

__all__ = [
    "RateReport",
    "dual_order",
    "uplink_sum_rate",
    "uplink_rates",
    "downlink_sum_rate",
    "hybrid_covariances",
    "hybrid_sum_rate",
]

ChannelLike = Union[ChannelRealization, np.ndarray]


def _H(channels: ChannelLike) -> np.ndarray:
    return channels.H if isinstance(channels, ChannelRealization) else np.asarray(channels)


def _mats(covs) -> np.ndarray:
    return covs.mats if isinstance(covs, CovarianceSet) else np.asarray(covs)


@dataclass(frozen=True)
class RateReport:
    per_user_per_subcarrier: np.ndarray

    @property
    def sum_rate(self) -> float:
        """Sum over users, averaged over subcarriers."""
        return float(self.per_user_per_subcarrier.sum(axis=0).mean())

    @property
    def per_user(self) -> np.ndarray:
        return self.per_user_per_subcarrier.mean(axis=1)


def dual_order(U: int) -> list[int]:
    """Downlink encoding order matched to uplink decoding order 0..U-1."""
    return list(range(U - 1, -1, -1))


def _check_order(order: Sequence[int], U: int) -> np.ndarray:
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(U)):
        raise ValueError(f"order must be a permutation of 0..{U - 1}")
    return order


def uplink_sum_rate(channels: ChannelLike, ul_covs, noise_var: float = 1.0) -> float:
    """``sum_k log2 det(I_M + sum_u H_u^H S_u H_u / noise_var)``."""
    H = _H(channels)
    S = _mats(ul_covs)
    M = H.shape[-1]
    total = gram_terms(H, S).sum(axis=0) / noise_var
    return float(np.sum(log2det_pd(np.eye(M) + total)))


def uplink_rates(channels: ChannelLike, ul_covs, order: Optional[Sequence[int]] = None,
                 noise_var: float = 1.0) -> RateReport:
    """Per-user uplink rates under successive decoding.

    ``order`` lists users from first decoded to last; the first decoded user
    is interfered by all the others. Default is 0..U-1.
    """
    H = _H(channels)
    S = _mats(ul_covs)
    U, K, R, M = H.shape
    order = _check_order(range(U) if order is None else order, U)
    G = gram_terms(H, S) / noise_var
    rates = np.zeros((U, K))
    # decode last user first so the running sum is the residual interference
    remaining = np.eye(M) + np.zeros((K, M, M))
    prev = log2det_pd(remaining)
    for u in order[::-1]:
        remaining = remaining + G[u]
        cur = log2det_pd(remaining)
        rates[u] = cur - prev
        prev = cur
    return RateReport(np.maximum(rates, 0.0))


def downlink_sum_rate(channels: ChannelLike, dl_covs, order: Optional[Sequence[int]] = None,
                      noise_var: float = 1.0) -> RateReport:
    """Downlink rates with dirty-paper encoding.

    ``order`` is the encoding order: user ``order[n]`` is interfered by the
    users ``order[n+1:]``. ``order=range(U)`` reproduces the textbook
    expression with interference from ``i > u``; the default is
    :func:`dual_order`, the order produced by
    :func:`rcca.duality.conversion_matrices`.
    """
    H = _H(channels)
    Q = _mats(dl_covs)
    U, K, R, M = H.shape
    if Q.shape != (U, K, M, M):
        raise PreconditionError(f"downlink covariances must have shape {(U, K, M, M)}")
    order = _check_order(dual_order(U) if order is None else order, U)
    rates = np.zeros((U, K))
    eye = np.eye(R)
    for pos, u in enumerate(order):
        Hu = H[u]
        interferers = order[pos + 1:]
        interference = Q[interferers].sum(axis=0) if len(interferers) else np.zeros((K, M, M))
        Y = eye + Hu @ interference @ herm(Hu) / noise_var
        signal = Hu @ Q[u] @ herm(Hu) / noise_var
        rates[u] = log2det_pd(Y + signal) - log2det_pd(Y)
    return RateReport(np.maximum(rates, 0.0))


def hybrid_covariances(P_RF: np.ndarray, P_BB: np.ndarray) -> np.ndarray:
    """Per-(u, k) hybrid covariances ``P_RF P_BB P_BB^H P_RF^H``.

    ``P_BB`` has shape (U, K, N_RF, N_s); zero padding columns are harmless.
    """
    P_H = P_RF @ P_BB
    return P_H @ herm(P_H)


def hybrid_sum_rate(channels: ChannelLike, P_RF: np.ndarray, P_BB: np.ndarray,
                    order: Optional[Sequence[int]] = None,
                    noise_var: float = 1.0) -> RateReport:
    H = _H(channels)
    if P_BB.shape[:2] != H.shape[:2] or P_RF.shape != (H.shape[-1], P_BB.shape[2]):
        raise ValueError("precoder dimensions do not match the channel")
    return downlink_sum_rate(H, hybrid_covariances(P_RF, P_BB), order=order,
                             noise_var=noise_var)
