"""Polarised visibility spectrograms: containers, HDF5 I/O, synthesis, patching.

Visibilities are held as complex arrays ordered ``[baseline, freq, time, pol]``
with a boolean RFI mask ``[baseline, freq, time]`` shared by all polarisations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import h5py
import numpy as np

from .errors import AssemblyError, ConfigError, DataError, FormatError, SchemaError

POL_LABELS = ("XX", "XY", "YX", "YY")
RFI_KINDS = ("narrowband", "broadband", "blip")


@dataclass
class VisibilityTensor:
    values: np.ndarray
    freq_labels: np.ndarray
    pol_labels: tuple[str, ...] = POL_LABELS

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 4:
            raise SchemaError(f"visibilities must be rank 4 [B,F,T,P], got shape {self.values.shape}")
        B, F, T, P = self.values.shape
        if F < 1 or T < 1 or B < 1:
            raise SchemaError(f"empty visibility axes {self.values.shape}")
        self.pol_labels = tuple(str(p) for p in self.pol_labels)
        if P not in (1, 4):
            raise SchemaError(f"polarisation axis must have 1 or 4 entries, got {P}")
        if len(self.pol_labels) != P:
            raise SchemaError(f"{len(self.pol_labels)} pol labels for {P} polarisations")
        if P == 4 and self.pol_labels != POL_LABELS:
            raise SchemaError(f"pol labels must be {POL_LABELS}, got {self.pol_labels}")
        self.freq_labels = np.asarray(self.freq_labels, dtype=float)
        if self.freq_labels.shape != (F,):
            raise SchemaError(f"freq_labels shape {self.freq_labels.shape} != ({F},)")
        _check_finite(self.values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_pol(self) -> int:
        return self.values.shape[3]


@dataclass
class FlagMask:
    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags).astype(bool)
        if self.flags.ndim != 3:
            raise SchemaError(f"flags must be rank 3 [B,F,T], got shape {self.flags.shape}")

    def check_matches(self, vis: VisibilityTensor):
        if self.flags.shape != vis.values.shape[:3]:
            raise SchemaError(
                f"flag shape {self.flags.shape} does not match visibilities {vis.values.shape[:3]}"
            )


def _check_finite(values: np.ndarray):
    bad = ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DataError(f"non-finite visibility value at index {idx}")


# --------------------------------------------------------------------------
# HDF5
# --------------------------------------------------------------------------

DEFAULT_LAYOUT = {
    "visibilities": "/visibilities",
    "flags": "/flags",
    "pol_labels": "pol_labels",
    "freq_start_hz": "freq_start_hz",
    "freq_step_hz": "freq_step_hz",
}


def load_hdf5(path, layout: Mapping[str, str] | None = None) -> tuple[VisibilityTensor, FlagMask]:
    """Read visibilities and flags from an HDF5 file.

    Parameters
    ----------
    path : path-like
        File to read.
    layout : mapping, optional
        Overrides for dataset paths / attribute names (keys of
        ``DEFAULT_LAYOUT``). Use this to adapt files written by other tools.

    Returns
    -------
    (VisibilityTensor, FlagMask)

    Raises
    ------
    FormatError
        A required dataset is missing.
    SchemaError
        Dataset ranks or shapes are inconsistent.
    DataError
        A visibility is NaN or infinite; the message names the first index.
    """
    lay = dict(DEFAULT_LAYOUT)
    if layout:
        unknown = set(layout) - set(lay)
        if unknown:
            raise ConfigError(f"unknown layout keys {sorted(unknown)}")
        lay.update(layout)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with h5py.File(path, "r") as h5:
        for key in ("visibilities", "flags"):
            if lay[key] not in h5:
                raise FormatError(f"{path}: missing dataset {lay[key]!r}")
        vis_ds, flag_ds = h5[lay["visibilities"]], h5[lay["flags"]]
        if vis_ds.ndim != 4:
            raise SchemaError(f"{lay['visibilities']} must be rank 4, got {vis_ds.shape}")
        if flag_ds.ndim != 3:
            raise SchemaError(f"{lay['flags']} must be rank 3, got {flag_ds.shape}")
        if tuple(flag_ds.shape) != tuple(vis_ds.shape[:3]):
            raise SchemaError(f"flags shape {flag_ds.shape} inconsistent with visibilities {vis_ds.shape}")
        values = vis_ds[()]
        flags = flag_ds[()]
        attrs = h5.attrs
        n_pol = values.shape[3]
        if lay["pol_labels"] in attrs:
            pols = tuple(p.decode() if isinstance(p, bytes) else str(p) for p in attrs[lay["pol_labels"]])
        else:
            pols = POL_LABELS if n_pol == 4 else ("I",)
        f0 = float(attrs.get(lay["freq_start_hz"], 0.0))
        df = float(attrs.get(lay["freq_step_hz"], 1.0))
    if not np.iscomplexobj(values):
        values = values.astype(np.complex64)
    _check_finite(values)
    freqs = f0 + df * np.arange(values.shape[1])
    vis = VisibilityTensor(values, freqs, pols)
    mask = FlagMask(flags)
    mask.check_matches(vis)
    return vis, mask


def save_hdf5(path, vis: VisibilityTensor, mask: FlagMask):
    mask.check_matches(vis)
    freqs = vis.freq_labels
    step = float(freqs[1] - freqs[0]) if freqs.size > 1 else 1.0
    with h5py.File(path, "w") as h5:
        h5.create_dataset("visibilities", data=vis.values.astype(np.complex64))
        h5.create_dataset("flags", data=mask.flags.astype(np.uint8))
        h5.attrs["pol_labels"] = list(vis.pol_labels)
        h5.attrs["freq_start_hz"] = float(freqs[0])
        h5.attrs["freq_step_hz"] = step


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

@dataclass
class SyntheticConfig:
    n_baselines: int = 1
    n_freq: int = 64
    n_time: int = 64
    rfi_kinds: tuple[str, ...] = RFI_KINDS
    rfi_fraction: float = 0.1
    noise_level: float = 0.05
    seed: int = 0
    # RFI amplitude range in units of the co-polar background RMS
    rfi_amplitude: tuple[float, float] = (8.0, 30.0)
    n_pol: int = 4
    freq_start_hz: float = 100e6
    freq_step_hz: float = 97.65625e3

    def __post_init__(self):
        self.rfi_kinds = tuple(self.rfi_kinds)
        self.rfi_amplitude = tuple(float(a) for a in self.rfi_amplitude)
        if not 0.0 <= self.rfi_fraction <= 0.5:
            raise ConfigError(f"rfi_fraction must lie in [0, 0.5], got {self.rfi_fraction}")
        if self.n_freq < 16 or self.n_time < 16:
            raise ConfigError("synthetic spectrograms need at least 16 frequency and 16 time samples")
        if self.n_baselines < 1:
            raise ConfigError("n_baselines must be >= 1")
        bad = set(self.rfi_kinds) - set(RFI_KINDS)
        if bad or not self.rfi_kinds:
            raise ConfigError(f"rfi_kinds must be a non-empty subset of {RFI_KINDS}")
        if self.n_pol not in (1, 4):
            raise ConfigError("n_pol must be 1 or 4")
        lo, hi = self.rfi_amplitude
        if not 5.0 <= lo <= hi:
            raise ConfigError("rfi_amplitude must satisfy 5 <= low <= high")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be non-negative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rfi_kinds"] = list(self.rfi_kinds)
        d["rfi_amplitude"] = list(self.rfi_amplitude)
        return d


def _coherency(rng, amplitude, pol_fraction):
    """Coherency entries (XX, XY, YX, YY) of a partially polarised source.

    Co-hands are real and positive so overlapping RFI never cancels in total intensity.
    """
    psi = rng.uniform(0, np.pi)
    chi = rng.uniform(-np.pi / 4, np.pi / 4)
    ex = np.cos(psi) * np.cos(chi) - 1j * np.sin(psi) * np.sin(chi)
    ey = np.sin(psi) * np.cos(chi) + 1j * np.cos(psi) * np.sin(chi)
    unpol = (1 - pol_fraction) / 2
    c = np.array([
        unpol + pol_fraction * abs(ex) ** 2,
        pol_fraction * ex * np.conj(ey),
        pol_fraction * ey * np.conj(ex),
        unpol + pol_fraction * abs(ey) ** 2,
    ])
    return amplitude * c


def generate_synthetic(cfg: SyntheticConfig) -> tuple[VisibilityTensor, FlagMask]:
    """Generate a smooth polarised background with injected, flagged RFI.

    The background is a low-order polynomial bandpass times a slow time drift
    with circular Gaussian noise; cross-hands carry a few per cent leakage.
    RFI (narrowband rows, broadband columns, point-like blips) is added
    until the flagged fraction reaches ``cfg.rfi_fraction``.
    """
    rng = np.random.default_rng(cfg.seed)
    B, F, T = cfg.n_baselines, cfg.n_freq, cfg.n_time
    fx = np.linspace(-1, 1, F)
    tx = np.linspace(0, 1, T)
    vis = np.zeros((B, F, T, 4), dtype=np.complex128)
    flags = np.zeros((B, F, T), dtype=bool)
    target = int(round(cfg.rfi_fraction * F * T))

    for b in range(B):
        coeffs = rng.uniform(-0.3, 0.3, size=3)
        bandpass = 1.0 + coeffs[0] * fx + coeffs[1] * fx**2 + coeffs[2] * fx**3
        drift = 1.0 + 0.1 * np.sin(2 * np.pi * (rng.uniform(0.2, 1.0) * tx + rng.uniform()))
        phase = np.exp(1j * (rng.uniform(0, 2 * np.pi) + rng.uniform(-2, 2) * fx[:, None] + rng.uniform(-2, 2) * tx[None, :]))
        sky = np.outer(bandpass, drift) * phase
        leak = rng.uniform(0.01, 0.05, size=2)
        planes = [sky, leak[0] * sky, leak[1] * np.conj(sky), sky * rng.uniform(0.9, 1.1)]
        scale = np.mean(np.abs(sky))
        for p, plane in enumerate(planes):
            noise = rng.normal(size=(F, T)) + 1j * rng.normal(size=(F, T))
            vis[b, :, :, p] = plane + cfg.noise_level * scale * noise / np.sqrt(2)

        bg_rms = np.sqrt(np.mean(np.abs(vis[b, :, :, [0, 3]]) ** 2))
        lo, hi = cfg.rfi_amplitude
        while flags[b].sum() < target:
            kind = cfg.rfi_kinds[rng.integers(len(cfg.rfi_kinds))]
            if kind == "narrowband":
                length = int(rng.integers(T // 2, T + 1))
                t0 = int(rng.integers(0, T - length + 1))
                f = int(rng.integers(F))
                fs, ts = slice(f, f + 1), slice(t0, t0 + length)
            elif kind == "broadband":
                length = int(rng.integers(F // 2, F + 1))
                f0 = int(rng.integers(0, F - length + 1))
                t = int(rng.integers(T))
                fs, ts = slice(f0, f0 + length), slice(t, t + 1)
            else:
                h, w = (int(v) for v in rng.integers(1, 3, size=2))
                f, t = int(rng.integers(F - h + 1)), int(rng.integers(T - w + 1))
                fs, ts = slice(f, f + h), slice(t, t + w)
            amp = rng.uniform(lo, hi) * bg_rms
            coh = _coherency(rng, amp, rng.uniform(0.6, 1.0))
            region = vis[b, fs, ts, :]
            jitter = 1.0 + 0.05 * rng.normal(size=region.shape[:2])
            region += jitter[..., None] * coh[None, None, :]
            flags[b, fs, ts] = True

    if cfg.n_pol == 1:
        vis = vis[..., :1]
        pols = ("XX",)
    else:
        pols = POL_LABELS
    freqs = cfg.freq_start_hz + cfg.freq_step_hz * np.arange(F)
    return VisibilityTensor(vis.astype(np.complex64), freqs, pols), FlagMask(flags)


# --------------------------------------------------------------------------
# Patching
# --------------------------------------------------------------------------

@dataclass
class Patch:
    """A ``patch_freq x patch_time`` tile of one baseline's feature planes.

    ``values`` is ``[C_in, T_patch]`` with leading feature planes (e.g.
    polarisations) flattened plane-major, so plane ``k`` occupies rows
    ``k*patch_freq:(k+1)*patch_freq``.
    """

    values: np.ndarray
    origin: tuple[int, int, int]
    extent: tuple[int, int]
    mask: np.ndarray | None = None
    lead_shape: tuple[int, ...] = ()

    @property
    def patch_shape(self) -> tuple[int, int]:
        n_planes = int(np.prod(self.lead_shape, dtype=int))
        return self.values.shape[0] // n_planes, self.values.shape[1]

    @property
    def channels_in(self) -> int:
        return self.values.shape[0]


def patch(x, patch_freq: int, patch_time: int, mask=None, baseline: int = 0) -> list[Patch]:
    """Tile ``x[..., C, T]`` into non-overlapping ``patch_freq x patch_time`` patches.

    Edge tiles are zero-padded; ``Patch.extent`` records the unpadded size.
    Leading axes of ``x`` (e.g. polarisation planes) are stacked into the
    patch channel axis. ``mask`` (``[C, T]``) is tiled alongside.
    """
    if patch_freq < 1 or patch_time < 1:
        raise ConfigError(f"patch dimensions must be >= 1, got ({patch_freq}, {patch_time})")
    x = np.asarray(x)
    if x.ndim < 2:
        raise ConfigError("patch input must have at least 2 dimensions [C, T]")
    lead = x.shape[:-2]
    C, T = x.shape[-2:]
    nf, nt = math.ceil(C / patch_freq), math.ceil(T / patch_time)
    padded = np.zeros(lead + (nf * patch_freq, nt * patch_time), dtype=x.dtype)
    padded[..., :C, :T] = x
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (C, T):
            raise ConfigError(f"mask shape {mask.shape} != {(C, T)}")
        mpad = np.zeros((nf * patch_freq, nt * patch_time), dtype=bool)
        mpad[:C, :T] = mask
    out = []
    for i in range(nf):
        for j in range(nt):
            f0, t0 = i * patch_freq, j * patch_time
            block = padded[..., f0:f0 + patch_freq, t0:t0 + patch_time]
            out.append(Patch(
                values=block.reshape(-1, patch_time).copy(),
                origin=(baseline, f0, t0),
                extent=(min(patch_freq, C - f0), min(patch_time, T - t0)),
                mask=None if mask is None else mpad[f0:f0 + patch_freq, t0:t0 + patch_time].copy(),
                lead_shape=tuple(lead),
            ))
    return out


def unpatch(patches: Sequence[Patch], C: int, T: int, values: Sequence[np.ndarray] | None = None):
    """Reassemble patches into ``[..., C, T]``, cropping zero padding.

    ``values`` optionally replaces each patch's own values (e.g. per-patch
    predictions of shape ``[patch_freq, patch_time]``).

    Raises
    ------
    AssemblyError
        On duplicate origins or if the patches do not cover ``[C, T]``.
    """
    if not patches:
        raise AssemblyError("no patches to assemble")
    if values is not None and len(values) != len(patches):
        raise AssemblyError("values and patches differ in length")
    pf, pt = patches[0].patch_shape
    blocks = []
    for k, p in enumerate(patches):
        v = np.asarray(p.values if values is None else values[k])
        lead = p.lead_shape if values is None else v.shape[:-2] if v.ndim > 2 else ()
        blocks.append(v.reshape(lead + (pf, pt)))
    lead = blocks[0].shape[:-2]
    nf, nt = math.ceil(C / pf), math.ceil(T / pt)
    out = np.zeros(lead + (nf * pf, nt * pt), dtype=blocks[0].dtype)
    seen = set()
    for p, block in zip(patches, blocks):
        _, f0, t0 = p.origin
        key = (f0, t0)
        if key in seen:
            raise AssemblyError(f"duplicate patch origin {key}")
        if f0 % pf or t0 % pt or f0 >= C or t0 >= T:
            raise AssemblyError(f"patch origin {key} is not on the ({pf}, {pt}) tiling grid of [{C}, {T}]")
        seen.add(key)
        out[..., f0:f0 + pf, t0:t0 + pt] = block
    if len(seen) != nf * nt:
        raise AssemblyError(f"expected {nf * nt} patches, got {len(seen)}: tiling has gaps")
    return out[..., :C, :T]


@dataclass
class DatasetSplit:
    train: list[Patch]
    test: list[Patch]
    seed: int = 0
    test_indices: list[int] = field(default_factory=list)


def split(patches: Sequence[Patch], test_fraction: float, seed: int) -> DatasetSplit:
    """Deterministically shuffle ``patches`` and hold out ``test_fraction`` of them."""
    if not patches:
        raise ConfigError("cannot split an empty patch list")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(patches)
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n >= 2:
        n_test = min(max(n_test, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test_idx = sorted(int(i) for i in order[:n_test])
    train_idx = sorted(int(i) for i in order[n_test:])
    return DatasetSplit(
        train=[patches[i] for i in train_idx],
        test=[patches[i] for i in test_idx],
        seed=seed,
        test_indices=test_idx,
    )
