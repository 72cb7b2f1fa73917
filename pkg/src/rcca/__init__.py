"""Rank-constrained coordinate ascent hybrid precoding for wideband multiuser MIMO."""

from .core import RCCAResult, SolverOptions, rcca_solve
from .duality import CovarianceSet, conversion_matrices, effective_channels
from .factorization import PrecoderSet, factorize_covariances, hybrid_factorize
from .metrics import downlink_sum_rate, dual_order, hybrid_sum_rate, uplink_sum_rate
from .sysmodel import ChannelRealization, SystemConfig, generate_channel

__all__ = [
    "ChannelRealization",
    "CovarianceSet",
    "PrecoderSet",
    "RCCAResult",
    "SolverOptions",
    "SystemConfig",
    "conversion_matrices",
    "downlink_sum_rate",
    "dual_order",
    "effective_channels",
    "factorize_covariances",
    "generate_channel",
    "hybrid_factorize",
    "hybrid_sum_rate",
    "rcca_solve",
    "uplink_sum_rate",
]

__version__ = "0.1.0"
