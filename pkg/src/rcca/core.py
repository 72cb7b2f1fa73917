"""Rank-constrained coordinate ascent (RCCA) for wideband hybrid precoding.

Each iteration works in the dual uplink. Every user gets a frequency-flat
basis (left singular vectors of its stacked effective channels) and a gain
per basis column and subcarrier. Basis columns are then picked greedily by
their gain product over the band until the matching downlink directions at
the central subcarrier span ``N_RF`` dimensions, and a single waterfilling
over the picked (column, subcarrier) gains sets the power of every stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._linalg import herm, log2det_pd, numerical_rank
from .duality import (
    ConversionState,
    CovarianceSet,
    conversion_matrices,
    effective_channels,
)
from .metrics import uplink_sum_rate
from .sysmodel import ChannelRealization, SystemConfig

__all__ = [
    "SelectionError",
    "WaterfillError",
    "BasisSet",
    "StreamSelection",
    "PowerAllocation",
    "SolverOptions",
    "RCCAResult",
    "common_basis",
    "equivalent_gains",
    "log_gain_products",
    "select_streams",
    "waterfill",
    "allocate_power",
    "assemble_covariances",
    "initial_covariances",
    "separable_bound",
    "structured_objective",
    "kkt_covariance",
    "kkt_residual",
    "rank_project",
    "rcca_iteration",
    "rcca_solve",
]

log = logging.getLogger(__name__)


class SelectionError(RuntimeError):
    """No stream has a positive wideband gain."""


class WaterfillError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSet:
    """Frequency-flat bases ``U[u]`` (R x R), gains ``Sigma[u, k, i]`` and
    log gain products ``log_upsilon[u, i] = sum_k log Sigma[u, k, i]``."""

    U: np.ndarray
    Sigma: np.ndarray
    log_upsilon: np.ndarray

    @property
    def upsilon(self) -> np.ndarray:
        return np.exp(self.log_upsilon)


@dataclass(frozen=True)
class StreamSelection:
    selected: list[tuple[int, int]]
    T: np.ndarray
    rank_achieved: int
    K_c: int


@dataclass(frozen=True)
class PowerAllocation:
    """Powers per selected tuple and subcarrier, ``p[s, k]``, plus the
    diagonal power matrices ``P_diag[u, k, i]``."""

    p: np.ndarray
    water_level: float
    P_diag: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50
    tol: float = 1e-4
    rank_rtol: float = 1e-8
    fast_delta: bool = False
    project_rank: bool = True


@dataclass
class RCCAResult:
    ul_covs: CovarianceSet
    dl_covs: CovarianceSet
    dl_covs_exact: CovarianceSet
    conversion: ConversionState
    bases: BasisSet
    selection: StreamSelection
    allocation: PowerAllocation
    rate_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    degenerate: bool = False
    best_iteration: int = 0

    @property
    def uplink_rate(self) -> float:
        """Best uplink sum-rate, per subcarrier (bits/s/Hz)."""
        return self.rate_trace[self.best_iteration]


def _phase_normalize(V: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate each column so its first non-negligible entry is real positive."""
    mag = np.abs(V)
    first = np.argmax(mag > tol * np.max(mag, axis=-2, keepdims=True), axis=-2)
    pivot = np.take_along_axis(V, first[..., None, :], axis=-2)
    phase = np.where(np.abs(pivot) > 0, pivot / np.where(pivot == 0, 1, np.abs(pivot)), 1)
    return V / phase


def common_basis(effective: np.ndarray) -> np.ndarray:
    """Left singular vectors of ``[H_eff[0], ..., H_eff[K-1]]``.

    ``effective`` has shape (K, R, M) or (U, K, R, M); columns come out in
    descending singular-value order. Computed from the R x R Gram matrix
    ``sum_k H_eff[k] H_eff[k]^H``, which has the same eigenvectors.
    """
    gram = np.sum(effective @ herm(effective), axis=-3)
    w, V = np.linalg.eigh(0.5 * (gram + herm(gram)))
    V = V[..., ::-1]
    return _phase_normalize(V)


def equivalent_gains(basis: np.ndarray, effective: np.ndarray) -> np.ndarray:
    """``diag(U^H H_eff[k] H_eff[k]^H U)`` for every k; shape (..., K, R)."""
    proj = herm(basis)[..., None, :, :] @ effective
    return np.sum(np.abs(proj) ** 2, axis=-1)


def log_gain_products(gains: np.ndarray) -> np.ndarray:
    """``sum_k log gains[..., k, i]``; exact zeros map to ``-inf``."""
    with np.errstate(divide="ignore"):
        return np.sum(np.log(gains), axis=-2)


def select_streams(log_upsilon: np.ndarray, delta_center: np.ndarray, bases: np.ndarray,
                   N_RF: int, K_c: int = 0, rtol: float = 1e-8) -> StreamSelection:
    """Greedy stream pick under the central-subcarrier rank budget.

    Repeatedly takes the (user, column) with the largest remaining gain
    product (ties go to the lowest user, then lowest column), appends
    ``delta_center[j] @ bases[j][:, i]`` to ``T`` and stops once ``T`` has
    numerical rank ``N_RF`` or no candidate with positive gain is left.
    """
    remaining = np.array(log_upsilon, dtype=float, copy=True)
    U, R = remaining.shape
    if not np.any(np.isfinite(remaining)):
        raise SelectionError("every stream has zero wideband gain")
    selected: list[tuple[int, int]] = []
    columns: list[np.ndarray] = []
    rank = 0
    while rank < N_RF:
        flat = int(np.argmax(remaining))
        j, i = divmod(flat, R)
        if not np.isfinite(remaining[j, i]):
            break
        columns.append(delta_center[j] @ bases[j][:, i])
        selected.append((j, i))
        remaining[j, i] = -np.inf
        rank = numerical_rank(np.stack(columns, axis=1), rtol)
    T = np.stack(columns, axis=1)
    return StreamSelection(selected=selected, T=T, rank_achieved=rank, K_c=K_c)


def waterfill(gains: np.ndarray, P_tx: float) -> tuple[np.ndarray, float]:
    """Powers ``max(0, mu - 1/g)`` summing to ``P_tx``; returns ``(p, mu)``."""
    g = np.asarray(gains, dtype=float).ravel()
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise WaterfillError("gains must be finite and nonnegative")
    if not np.any(g > 0):
        raise WaterfillError("waterfilling needs at least one positive gain")
    pos = np.flatnonzero(g > 0)
    inv = np.sort(1.0 / g[pos])
    # largest n with mu_n = (P + sum of n smallest 1/g) / n above the n-th level
    mu_candidates = (P_tx + np.cumsum(inv)) / np.arange(1, inv.size + 1)
    n_active = int(np.count_nonzero(mu_candidates > inv))
    mu = float(mu_candidates[n_active - 1])
    p = np.zeros_like(g)
    p[pos] = np.maximum(0.0, mu - 1.0 / g[pos])
    return p.reshape(np.shape(gains)), mu


def allocate_power(selection: StreamSelection, gains: np.ndarray,
                   P_tx: float) -> PowerAllocation:
    """Waterfill jointly over the selected (user, column) pairs on all subcarriers."""
    U, K, R = gains.shape
    users = np.array([j for j, _ in selection.selected])
    cols = np.array([i for _, i in selection.selected])
    sel_gains = gains[users, :, cols]  # (S, K)
    p, mu = waterfill(sel_gains, P_tx)
    P_diag = np.zeros((U, K, R))
    P_diag[users, :, cols] = p
    return PowerAllocation(p=p, water_level=mu, P_diag=P_diag)


def assemble_covariances(bases: np.ndarray, P_diag: np.ndarray) -> CovarianceSet:
    """``S[u, k] = U_u diag(P_diag[u, k]) U_u^H``."""
    B = bases[:, None]
    S = (B * P_diag[..., None, :]) @ herm(B)
    return CovarianceSet("uplink", 0.5 * (S + herm(S)))


def initial_covariances(cfg: SystemConfig) -> CovarianceSet:
    """Scaled identities meeting the power budget with equality."""
    scale = cfg.P_tx / (cfg.U * cfg.K * cfg.R)
    mats = np.broadcast_to(scale * np.eye(cfg.R), (cfg.U, cfg.K, cfg.R, cfg.R)).astype(complex)
    return CovarianceSet("uplink", mats)


def separable_bound(gains: np.ndarray, P_diag: np.ndarray) -> float:
    """``sum log2(1 + p g)`` over users, subcarriers and basis columns."""
    return float(np.sum(np.log2(1.0 + P_diag * gains)))


def structured_objective(effective: np.ndarray, bases: np.ndarray, P_diag: np.ndarray) -> float:
    """``sum_{u,k} log2 det(I + V^H P V)`` with ``V = U_u^H H_eff[u, k]``."""
    V = herm(bases)[:, None] @ effective
    root = np.sqrt(P_diag)[..., :, None]
    C = root * (V @ herm(V)) * np.swapaxes(root, -1, -2)
    R = C.shape[-1]
    return float(np.sum(log2det_pd(np.eye(R) + C)))


def kkt_covariance(effective: np.ndarray, P_tx: float) -> tuple[np.ndarray, float]:
    """Single-subcarrier covariance ``U Psi U^H`` satisfying the KKT condition.

    ``U Gamma U^H`` is the eigendecomposition of ``H_eff H_eff^H`` and
    ``psi_i = max(0, 1/lam - 1/gamma_i)`` with ``1/lam`` the water level that
    spends ``P_tx``. Returns ``(S, lam)``.
    """
    w, V = np.linalg.eigh(effective @ herm(effective))
    w = np.maximum(w, 0.0)
    psi, mu = waterfill(w, P_tx)
    S = (V * psi) @ herm(V)
    return 0.5 * (S + herm(S)), 1.0 / mu


def kkt_residual(effective: np.ndarray, S: np.ndarray, lam: float) -> float:
    """Frobenius norm of ``((I + G S)^{-1} G - lam I) S`` with ``G = H_eff H_eff^H``."""
    G = effective @ herm(effective)
    R = G.shape[-1]
    inner = np.linalg.solve(np.eye(R) + G @ S, G) - lam * np.eye(R)
    return float(np.linalg.norm(inner @ S))


def rank_project(dl_covs: CovarianceSet, N_RF: int, P_tx: float) -> CovarianceSet:
    """Restrict all downlink covariances to one ``N_RF``-dimensional subspace.

    The subspace is spanned by the dominant left singular vectors of the
    stacked square-root precoders, which keeps the most transmit power.
    Power is rescaled back to ``P_tx``.
    """
    Q = dl_covs.mats
    M = Q.shape[-1]
    w, V = np.linalg.eigh(Q)
    roots = (V * np.sqrt(np.maximum(w, 0.0))[..., None, :])
    stacked = np.moveaxis(roots, -2, 0).reshape(M, -1)
    left, s, _ = np.linalg.svd(stacked, full_matrices=False)
    r = min(N_RF, int(np.count_nonzero(s > 1e-12 * s[0]))) if s.size and s[0] > 0 else 0
    if r == 0:
        return dl_covs
    basis = left[:, :r]
    proj = basis @ herm(basis)
    projected = proj @ Q @ proj
    projected = 0.5 * (projected + herm(projected))
    power = float(np.real(np.trace(projected, axis1=-2, axis2=-1)).sum())
    return CovarianceSet("downlink", projected * (P_tx / power))


def _normalized(channels: ChannelRealization | np.ndarray, noise_var: float) -> np.ndarray:
    H = channels.H if isinstance(channels, ChannelRealization) else np.asarray(channels)
    return H / np.sqrt(noise_var)


def rcca_iteration(H: np.ndarray, S: CovarianceSet, cfg: SystemConfig,
                   opts: SolverOptions = SolverOptions()):
    """One pass of the basis update, stream selection and waterfilling.

    ``H`` must already be noise-normalized. Returns the new uplink
    covariances together with the intermediate basis, selection and power
    allocation.
    """
    K_c = cfg.center_subcarrier
    effective = effective_channels(H, S.mats)
    if opts.fast_delta:
        center = slice(K_c, K_c + 1)
        state, _ = conversion_matrices(H[:, center], CovarianceSet("uplink", S.mats[:, center]))
        delta_center = state.Delta[:, 0]
    else:
        state, _ = conversion_matrices(H, S)
        delta_center = state.Delta[:, K_c]
    bases = common_basis(effective)
    gains = equivalent_gains(bases, effective)
    basis_set = BasisSet(U=bases, Sigma=gains, log_upsilon=log_gain_products(gains))
    selection = select_streams(basis_set.log_upsilon, delta_center, bases, cfg.N_RF,
                               K_c=K_c, rtol=opts.rank_rtol)
    allocation = allocate_power(selection, gains, cfg.P_tx)
    S_new = assemble_covariances(bases, allocation.P_diag)
    return S_new, basis_set, selection, allocation, effective


def rcca_solve(channels: ChannelRealization | np.ndarray, cfg: SystemConfig,
               opts: SolverOptions = SolverOptions(),
               initial: Optional[CovarianceSet] = None) -> RCCAResult:
    """Run RCCA to convergence and convert the best iterate to the downlink.

    The rate trace holds the uplink sum-rate per subcarrier of the initial
    point followed by every iterate. Iteration stops when the relative rate
    change drops below ``opts.tol`` or after ``opts.max_iter`` iterations;
    since ascent is not monotone the best iterate is returned.
    """
    H = _normalized(channels, cfg.sigma_n2)
    U, K, R, M = H.shape
    if (U, K, R, M) != (cfg.U, cfg.K, cfg.R, cfg.M):
        raise ValueError("channel shape does not match the configuration")
    S = initial if initial is not None else initial_covariances(cfg)
    trace = [uplink_sum_rate(H, S) / K]
    best = None
    converged = False
    iterations = 0
    for it in range(1, opts.max_iter + 1):
        S, basis_set, selection, allocation, _ = rcca_iteration(H, S, cfg, opts)
        rate = uplink_sum_rate(H, S) / K
        trace.append(rate)
        iterations = it
        if best is None or rate > best[0]:
            best = (rate, it, S, basis_set, selection, allocation)
        if abs(rate - trace[-2]) / max(trace[-2], 1.0) < opts.tol:
            converged = True
            break
    _, best_it, S_best, basis_set, selection, allocation = best
    if not converged:
        log.info("RCCA hit the iteration cap (%d) without converging", opts.max_iter)
    degenerate = selection.rank_achieved < cfg.N_RF
    state, dl_exact = conversion_matrices(H, S_best)
    dl = rank_project(dl_exact, cfg.N_RF, cfg.P_tx) if opts.project_rank else dl_exact
    return RCCAResult(
        ul_covs=S_best,
        dl_covs=dl,
        dl_covs_exact=dl_exact,
        conversion=state,
        bases=basis_set,
        selection=selection,
        allocation=allocation,
        rate_trace=trace,
        iterations=iterations,
        converged=converged,
        degenerate=degenerate,
        best_iteration=best_it,
    )
