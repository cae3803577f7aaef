"""Turn complex visibilities into bounded real features.

Covers magnitude extraction, divisive normalisation along frequency,
linear-feed Stokes parameters and the degree of polarisation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import ConfigError, DomainError


class StokesPixel(NamedTuple):
    I: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    Vs: np.ndarray


@dataclass(frozen=True)
class DnConfig:
    window: int = 5
    sigma: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"DN window must be odd and >= 1, got {self.window}")
        if self.sigma <= 0:
            raise ConfigError(f"DN sigma must be > 0, got {self.sigma}")
        if self.exponent <= 0:
            raise ConfigError(f"DN exponent must be > 0, got {self.exponent}")


def magnitude(v) -> np.ndarray:
    """Elementwise modulus of a visibility array (or ``VisibilityTensor``)."""
    values = getattr(v, "values", v)
    return np.abs(np.asarray(values))


def divisive_normalise(x, cfg: DnConfig = DnConfig()) -> np.ndarray:
    """Divide each pixel by the pooled activity of its frequency neighbourhood.

    ``y[f, t] = x[f, t]**n / (sigma**n + mean(x[f-w:f+w+1, t])**n)`` with
    ``w = (window - 1) // 2`` and reflective boundaries. The pooling runs
    along axis ``-2`` (frequency) only, so any leading axes are independent.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("divisive normalisation requires non-negative input")
    if x.ndim < 2:
        raise DomainError("divisive normalisation expects at least [F, T]")
    pooled = uniform_filter1d(x, size=cfg.window, axis=-2, mode="reflect")
    n = cfg.exponent
    return x**n / (cfg.sigma**n + pooled**n)


def stokes(xx, xy, yx, yy) -> StokesPixel:
    """Linear-feed Stokes parameters from the four correlation products.

    ``I = |XX| + |YY|``, ``Q = |XX| - |YY|``, ``U = Re(XY + YX)``,
    ``Vs = Im(YX - XY)``. Inputs broadcast.
    """
    xx, xy, yx, yy = (np.asarray(a) for a in (xx, xy, yx, yy))
    axx, ayy = np.abs(xx), np.abs(yy)
    return StokesPixel(
        I=axx + ayy,
        Q=axx - ayy,
        U=np.real(xy + yx),
        Vs=np.imag(yx - xy),
    )


def degree_of_polarisation(s: StokesPixel, epsilon: float = 1e-12) -> np.ndarray:
    """``sqrt(Q^2 + U^2 + Vs^2) / max(I, epsilon)`` clamped to ``[0, 1]``."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    pol = np.sqrt(np.square(s.Q) + np.square(s.U) + np.square(s.Vs))
    return np.clip(pol / np.maximum(s.I, epsilon), 0.0, 1.0)


def scale_to_unit(x, mode: str = "minmax") -> np.ndarray:
    """Affine map of ``x`` onto ``[0, 1]``; constant input maps to zeros.

    ``log-minmax`` applies ``log10`` first (zeros are floored to the
    smallest positive value present).
    """
    x = np.asarray(x, dtype=float)
    if mode == "log-minmax":
        if np.any(x < 0):
            raise DomainError("log-minmax scaling requires non-negative input")
        pos = x[x > 0]
        floor = pos.min() if pos.size else 1.0
        x = np.log10(np.maximum(x, floor))
    elif mode != "minmax":
        raise ConfigError(f"unknown scaling mode {mode!r}")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class PreprocessConfig:
    polarisation: str = "full"
    divisive_normalisation: bool = False
    dn: DnConfig = DnConfig()
    scaling: str = "log-minmax"
    dop_epsilon: float = 1e-12
    # pool DN over the whole spectrogram or only within each patch's frequency band
    dn_scope: str = "spectrogram"

    def __post_init__(self):
        if self.dn_scope not in ("spectrogram", "patch"):
            raise ConfigError(f"dn_scope must be 'spectrogram' or 'patch', got {self.dn_scope!r}")
        if self.polarisation not in ("full", "dop"):
            raise ConfigError(f"polarisation must be 'full' or 'dop', got {self.polarisation!r}")
        if self.scaling not in ("minmax", "log-minmax"):
            raise ConfigError(f"unknown scaling {self.scaling!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        dn = d.pop("divisive_normalisation", {}) or {}
        if isinstance(dn, bool):
            dn = {"enabled": dn}
        dn = dict(dn)
        enabled = bool(dn.pop("enabled", False))
        unknown = set(d) - {"polarisation", "scaling", "dop_epsilon", "dn_scope"}
        if unknown:
            raise ConfigError(f"unknown preprocess keys {sorted(unknown)}")
        return cls(divisive_normalisation=enabled, dn=DnConfig(**dn), **d)

    def to_dict(self) -> dict:
        return {
            "polarisation": self.polarisation,
            "scaling": self.scaling,
            "dop_epsilon": self.dop_epsilon,
            "dn_scope": self.dn_scope,
            "divisive_normalisation": {
                "enabled": self.divisive_normalisation,
                "window": self.dn.window,
                "sigma": self.dn.sigma,
                "exponent": self.dn.exponent,
            },
        }


def features(values: np.ndarray, cfg: PreprocessConfig, patch_freq: int | None = None) -> np.ndarray:
    """Feature planes for one baseline's visibilities ``[F, T, P]``.

    Returns ``[P, F, T]`` scaled magnitudes in ``full`` mode or ``[1, F, T]``
    degree of polarisation in ``dop`` mode. Divisive normalisation, when
    enabled, acts on each polarisation's magnitude plane before Stokes
    parameters are formed; complex phases are preserved by rescaling.
    ``patch_freq`` is required when ``cfg.dn_scope == "patch"``.
    """
    v = np.moveaxis(np.asarray(values), -1, 0)
    mag = np.abs(v).astype(float)
    if cfg.divisive_normalisation:
        if cfg.dn_scope == "patch":
            if not patch_freq:
                raise ConfigError("per-patch divisive normalisation needs patch_freq")
            normed = np.concatenate([
                divisive_normalise(mag[:, f0:f0 + patch_freq], cfg.dn)
                for f0 in range(0, mag.shape[1], patch_freq)
            ], axis=1)
        else:
            normed = divisive_normalise(mag, cfg.dn)
        gain = np.divide(normed, mag, out=np.zeros_like(mag), where=mag > 0)
        v = v * gain
        mag = normed
    if cfg.polarisation == "full":
        return scale_to_unit(mag, cfg.scaling)
    if v.shape[0] != 4:
        raise ConfigError("degree of polarisation needs all four polarisations")
    dop = degree_of_polarisation(stokes(*v), cfg.dop_epsilon)
    return dop[None]
