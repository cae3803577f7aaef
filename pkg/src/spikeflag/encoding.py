"""Latency spike encoding of features and spike-count decoding of outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


@dataclass
class SpikeTrain:
    spikes: np.ndarray  # bool [C, steps]
    exposure: int

    def __post_init__(self):
        self.spikes = np.asarray(self.spikes, dtype=bool)
        if self.exposure < 2:
            raise ConfigError(f"exposure must be >= 2 steps, got {self.exposure}")
        if self.spikes.shape[-1] % self.exposure:
            raise ConfigError("spike train length must be a multiple of the exposure")

    def counts(self) -> np.ndarray:
        """Spike count per channel and exposure window: ``[C, steps // exposure]``."""
        s = self.spikes
        return s.reshape(s.shape[:-1] + (-1, self.exposure)).sum(-1)


TargetTrain = SpikeTrain


def latency_encode(x, exposure: int, zero_spikes: bool = True, curve: str = "linear") -> SpikeTrain:
    """Encode values in ``[0, 1]`` as one spike each over ``exposure`` steps.

    Channel ``c`` fires at ``round((1 - x[c]) * (exposure - 1))`` so larger
    values fire earlier. With ``zero_spikes=False`` exact zeros stay silent.

    ``x`` may be ``[C]`` (one window) or ``[C, T]``, in which case column
    ``t`` occupies steps ``t*exposure:(t+1)*exposure``.
    """
    if curve != "linear":
        raise ConfigError(f"unsupported latency curve {curve!r}")
    if exposure < 2:
        raise ConfigError(f"exposure must be >= 2 steps, got {exposure}")
    x = np.asarray(x, dtype=float)
    bad = ~((x >= 0.0) & (x <= 1.0))
    if bad.any():
        c = int(np.argwhere(bad)[0][0])
        raise DomainError(f"latency input outside [0, 1] on channel {c}")
    col = x[:, None] if x.ndim == 1 else x
    t_fire = np.rint((1.0 - col) * (exposure - 1)).astype(int)
    onehot = np.arange(exposure) == t_fire[..., None]
    if not zero_spikes:
        onehot &= (col > 0)[..., None]
    return SpikeTrain(onehot.reshape(col.shape[0], -1), exposure)


def decode_spike_count(out: SpikeTrain, threshold_fraction: float = 0.5) -> np.ndarray:
    """Flag a channel/window when its count reaches ``threshold_fraction * exposure``."""
    if not 0.0 < threshold_fraction <= 1.0:
        raise ConfigError(f"threshold_fraction must lie in (0, 1], got {threshold_fraction}")
    flagged = out.counts() >= threshold_fraction * out.exposure
    return flagged[..., 0] if flagged.shape[-1] == 1 else flagged


def decode_soft(counts, exposure: int) -> np.ndarray:
    counts = np.asarray(counts)
    if np.any(counts > exposure) or np.any(counts < 0):
        raise DomainError("spike counts must lie in [0, exposure]")
    return counts / exposure


def encode_target(mask, exposure: int) -> TargetTrain:
    """All-ones window for flagged entries, all-zeros otherwise.

    ``mask`` is ``[C_out]`` or ``[C_out, T]``.
    """
    if exposure < 2:
        raise ConfigError(f"exposure must be >= 2 steps, got {exposure}")
    m = np.asarray(mask, dtype=bool)
    col = m[:, None] if m.ndim == 1 else m
    return SpikeTrain(np.repeat(col, exposure, axis=-1), exposure)
