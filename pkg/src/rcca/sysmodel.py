"""Scenario configuration and wideband geometric channel synthesis.

Channels follow a ray-based model: every user sees ``N_p`` paths, each with
a complex gain, a delay and a pair of angles. Delays are turned into delay
taps through a raised-cosine pulse sampled at ``T_s = 1/B`` and the taps are
combined per subcarrier with the OFDM phase ramp. Array responses are
evaluated at the subcarrier frequency, so wide bandwidths reproduce the beam
squint effect.

Subcarrier indices are 0-based throughout (``k = 0 .. K-1``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping, Optional, Union

import numpy as np
import yaml

__all__ = [
    "SPEED_OF_LIGHT",
    "ConfigError",
    "SystemConfig",
    "PathSet",
    "ChannelRealization",
    "raised_cosine",
    "array_response",
    "steering_vector",
    "generate_paths",
    "tap_responses",
    "frequency_response",
    "generate_channel",
    "config_from_mapping",
    "load_config",
]

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for scenario parameters that violate a configuration invariant."""


@dataclass(frozen=True)
class SystemConfig:
    """Scalars describing one downlink scenario.

    Defaults reproduce the reference simulation settings (U=6, f_c=5 GHz,
    B=200 MHz, M=32, R=2, D=8, K=64, N_RF=4) at an SNR of 10 dB.
    ``d_spacing=None`` means half a wavelength at the carrier frequency and
    ``quant_bits=None`` means ideal (infinite resolution) phase shifters.
    """

    M: int = 32
    R: int = 2
    U: int = 6
    K: int = 64
    N_RF: int = 4
    N_p: int = 32
    D: int = 8
    f_c: float = 5e9
    B: float = 200e6
    P_tx: float = 10.0
    sigma_n2: float = 1.0
    d_spacing: Optional[float] = None
    rolloff: float = 0.25
    quant_bits: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("M", "R", "U", "K", "N_RF", "N_p", "D"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.N_RF > self.M:
            raise ConfigError("N_RF must not exceed M")
        if self.R > self.M:
            raise ConfigError("R must not exceed M")
        if not self.P_tx > 0:
            raise ConfigError("P_tx must be positive")
        if not self.sigma_n2 > 0:
            raise ConfigError("sigma_n2 must be positive")
        if not self.B > 0 or not self.f_c > 0:
            raise ConfigError("B and f_c must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError("rolloff must lie in [0, 1]")
        if self.d_spacing is not None and not self.d_spacing > 0:
            raise ConfigError("d_spacing must be positive")
        if self.quant_bits is not None and int(self.quant_bits) < 1:
            raise ConfigError("quant_bits must be >= 1 or None (infinite)")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def antenna_spacing(self) -> float:
        """Inter-element spacing in meters (half carrier wavelength by default)."""
        if self.d_spacing is None:
            return self.wavelength / 2
        return self.d_spacing

    @property
    def sample_period(self) -> float:
        return 1.0 / self.B

    @property
    def subcarrier_freqs(self) -> np.ndarray:
        k = np.arange(self.K)
        return self.f_c + (k - (self.K - 1) / 2) * self.B / self.K

    @property
    def center_subcarrier(self) -> int:
        """0-based index of the central subcarrier, floor(K/2) in 1-based terms."""
        return max(self.K // 2 - 1, 0)

    @property
    def snr_db(self) -> float:
        return 10 * math.log10(self.P_tx / self.sigma_n2)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        return dataclasses.replace(self, P_tx=self.sigma_n2 * 10 ** (snr_db / 10))

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class PathSet:
    """Per-user path parameters, arrays of shape ``(U, N_p)``."""

    alpha: np.ndarray
    tau: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    gamma: float

    @property
    def num_users(self) -> int:
        return self.alpha.shape[0]

    @property
    def num_paths(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class ChannelRealization:
    """Frequency responses ``H[u, k]`` of shape ``(U, K, R, M)``."""

    H: np.ndarray
    paths: Optional[PathSet] = None
    subcarrier_freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def shape(self) -> tuple:
        return self.H.shape

    def scaled(self, factor: float) -> "ChannelRealization":
        return ChannelRealization(self.H * factor, self.paths, self.subcarrier_freqs)


def raised_cosine(t: np.ndarray, T: float, rolloff: float) -> np.ndarray:
    """Raised-cosine pulse ``p_rc(t)`` with symbol period ``T``.

    The removable singularity at ``|t| = T / (2 * rolloff)`` is replaced by
    its limit ``(pi / 4) * sinc(1 / (2 * rolloff))``.
    """
    x = np.asarray(t, dtype=float) / T
    out = np.sinc(x)
    if rolloff == 0:
        return out
    denom = 1.0 - (2.0 * rolloff * x) ** 2
    singular = np.isclose(denom, 0.0, atol=1e-12)
    safe = np.where(singular, 1.0, denom)
    out = out * np.cos(np.pi * rolloff * x) / safe
    limit = np.pi / 4 * np.sinc(1.0 / (2.0 * rolloff))
    return np.where(singular, limit, out)


def array_response(angles: np.ndarray, n_elements: int, freqs: np.ndarray,
                   spacing: float) -> np.ndarray:
    """ULA responses for every angle and frequency.

    Returns an array of shape ``angles.shape + (len(freqs), n_elements)``
    with entry ``n`` equal to
    ``exp(j 2 pi (f / c) spacing n sin(angle)) / sqrt(n_elements)``.
    """
    angles = np.asarray(angles, dtype=float)
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    n = np.arange(n_elements)
    step = 2 * np.pi * freqs / SPEED_OF_LIGHT * spacing  # (K,)
    phase = np.sin(angles)[..., None, None] * step[:, None] * n  # (..., K, N)
    return np.exp(1j * phase) / np.sqrt(n_elements)


def steering_vector(angle: float, which_end: Literal["transmit", "receive"],
                    k: int, cfg: SystemConfig) -> np.ndarray:
    """Unit-norm array response at subcarrier ``k`` (0-based).

    ``which_end="transmit"`` gives the length-``M`` base-station vector,
    ``"receive"`` the length-``R`` user vector.
    """
    if not 0 <= k < cfg.K:
        raise IndexError(f"subcarrier index {k} outside [0, {cfg.K})")
    if which_end == "transmit":
        n = cfg.M
    elif which_end == "receive":
        n = cfg.R
    else:
        raise ValueError(f"which_end must be 'transmit' or 'receive', got {which_end!r}")
    f = cfg.subcarrier_freqs[k]
    return array_response(np.float64(angle), n, np.array([f]), cfg.antenna_spacing)[0]


def generate_paths(seed: int, cfg: SystemConfig) -> PathSet:
    """Draw path parameters for all users from a seeded generator.

    Gains are circularly-symmetric complex standard normal, delays uniform
    on ``[0, (D-1) T_s]`` and both angles uniform on ``[-pi/2, pi/2]``.
    """
    rng = np.random.default_rng(seed)
    shape = (cfg.U, cfg.N_p)
    alpha = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    tau = rng.uniform(0.0, (cfg.D - 1) * cfg.sample_period, size=shape)
    theta = rng.uniform(-np.pi / 2, np.pi / 2, size=shape)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size=shape)
    gamma = math.sqrt(cfg.M * cfg.R / cfg.N_p)
    return PathSet(alpha=alpha, tau=tau, theta=theta, phi=phi, gamma=gamma)


def _path_outer_products(paths: PathSet, cfg: SystemConfig) -> np.ndarray:
    """``a_R(theta)[k] a_T(phi)[k]^H`` for every path, shape (U, N_p, K, R, M)."""
    freqs = cfg.subcarrier_freqs
    spacing = cfg.antenna_spacing
    a_r = array_response(paths.theta, cfg.R, freqs, spacing)
    a_t = array_response(paths.phi, cfg.M, freqs, spacing)
    return a_r[..., :, None] * a_t.conj()[..., None, :]


def _tap_gains(paths: PathSet, cfg: SystemConfig) -> np.ndarray:
    """Raised-cosine tap gains ``p_rc(d T_s - tau)``, shape (U, N_p, D)."""
    Ts = cfg.sample_period
    d = np.arange(cfg.D)
    return raised_cosine(d * Ts - paths.tau[..., None], Ts, cfg.rolloff)


def tap_responses(paths: PathSet, cfg: SystemConfig) -> np.ndarray:
    """Delay-tap matrices ``H_u^d[k]`` with shape (U, D, K, R, M)."""
    outer = _path_outer_products(paths, cfg)
    weights = paths.gamma * paths.alpha[..., None] * _tap_gains(paths, cfg)  # (U, P, D)
    return np.einsum("upd,upkrm->udkrm", weights, outer)


def frequency_response(paths: PathSet, cfg: SystemConfig) -> ChannelRealization:
    """Per-subcarrier channel matrices ``sum_d H_u^d[k] exp(-j 2 pi k d / K)``."""
    if paths.alpha.shape != (cfg.U, cfg.N_p):
        raise ConfigError("path set does not match the configured U and N_p")
    k = np.arange(cfg.K)
    d = np.arange(cfg.D)
    ramp = np.exp(-2j * np.pi * np.outer(k, d) / cfg.K)  # (K, D)
    # collapse taps per path first: g[u, p, k] = sum_d p_rc(d Ts - tau) ramp[k, d]
    g = np.einsum("upd,kd->upk", _tap_gains(paths, cfg), ramp)
    weights = paths.gamma * paths.alpha[..., None] * g
    H = np.einsum("upk,upkrm->ukrm", weights, _path_outer_products(paths, cfg))
    return ChannelRealization(H=H, paths=paths, subcarrier_freqs=cfg.subcarrier_freqs)


def generate_channel(seed: int, cfg: SystemConfig) -> ChannelRealization:
    return frequency_response(generate_paths(seed, cfg), cfg)


_FIELD_NAMES = {f.name for f in dataclasses.fields(SystemConfig)}
_INTEGER_FIELDS = {"M", "R", "U", "K", "N_RF", "N_p", "D"}


def _parse_bits(value: Any) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() in {"inf", "infinite", "infinity", "none"}:
            return None
        return int(value)
    if isinstance(value, float) and math.isinf(value):
        return None
    return int(value)


def config_from_mapping(values: Mapping[str, Any],
                        base: Optional[SystemConfig] = None) -> SystemConfig:
    """Build a config from a flat mapping of field names.

    ``snr_db`` is accepted as an alternative to ``P_tx`` (with the configured
    noise variance). Unknown keys raise :class:`ConfigError`.
    """
    base = base or SystemConfig()
    kwargs: dict[str, Any] = {}
    snr_db = None
    for key, value in values.items():
        if key == "snr_db":
            snr_db = float(value)
        elif key not in _FIELD_NAMES:
            raise ConfigError(f"unknown configuration key {key!r}")
        elif key == "quant_bits":
            kwargs[key] = _parse_bits(value)
        elif key == "d_spacing":
            kwargs[key] = None if value is None else float(value)
        elif key in _INTEGER_FIELDS:
            if float(value) != int(value):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    try:
        cfg = dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if snr_db is not None:
        if "P_tx" in kwargs:
            raise ConfigError("give either P_tx or snr_db, not both")
        cfg = cfg.with_snr_db(snr_db)
    return cfg


def load_config(path: Union[str, Path]) -> tuple[SystemConfig, dict]:
    """Read a YAML file; returns the scenario and the remaining experiment keys.

    Scenario keys may sit at top level or under a ``system:`` section; any
    other top-level key is returned untouched for the experiment runner.
    """
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    system = dict(data.pop("system", {}) or {})
    for key in list(data):
        if key in _FIELD_NAMES or key == "snr_db":
            system[key] = data.pop(key)
    return config_from_mapping(system), data
