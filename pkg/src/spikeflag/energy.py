"""Neuromorphic energy and power estimates for Xylo-scale deployment.

Units: per-patch figures are energies in joules; whole-spectrogram figures
are powers in watts, assuming ``cadence_hz`` full spectrograms per second
(default 1, so joules per spectrogram and watts coincide numerically).
Chip counts and upper bounds use exact rational arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigError, DomainError

CONVENTION = (
    "patch_energy in J per patch inference; lower/upper/balanced in W for "
    "cadence_hz whole-spectrogram inferences per second"
)


@dataclass(frozen=True)
class EnergyConstants:
    add_energy: float = 0.9e-12  # J per accumulate, 40 nm CMOS
    xylo_max_power: float = 550e-6  # W
    xylo_idle_power: float = 216e-6  # W
    xylo_inputs: int = 16
    dop_channels_per_chip: int = 15

    def exact(self, name: str) -> Fraction:
        return Fraction(repr(getattr(self, name)))


DEFAULT_CONSTANTS = EnergyConstants()

# Whole-spectrogram estimates as published for the two Xylo-scale models.
# Kept for comparison only; see ``published_discrepancies``.
PUBLISHED_XYLO_ESTIMATES = {
    "full": {"flops": 827392, "patch_energy": 1.4e-6, "lower": 22.9e-3, "upper": 64e-3, "balanced": 53.6e-3},
    "dop": {"flops": 1642496, "patch_energy": 2.79e-6, "lower": 3.42e-3, "upper": 17.5e-3, "balanced": 11.8e-3},
}


def _check_mode(mode: str):
    if mode not in ("full", "dop"):
        raise ConfigError(f"mode must be 'full' or 'dop', got {mode!r}")


def flops_snn(layers: Iterable[Sequence[float]], steps: int = 1) -> float:
    """Rate-weighted synaptic operation count ``sum(C_in * C_out * R_s) * steps``.

    ``layers`` holds ``(C_in, C_out, R_s)`` triples where ``R_s`` is the
    spike rate driving that weight matrix. ``steps`` accumulates over the
    simulation steps of one patch inference.
    """
    total = 0.0
    for c_in, c_out, rate in layers:
        if c_in < 0 or c_out < 0:
            raise DomainError(f"negative layer dimensions ({c_in}, {c_out})")
        if not 0.0 <= rate <= 1.0:
            raise DomainError(f"spike rate {rate} outside [0, 1]")
        total += c_in * c_out * rate
    if steps < 0:
        raise DomainError("steps must be non-negative")
    return total * steps


def flops_layers(architecture: Sequence[int], rates: Sequence[float]):
    """Pair each weight matrix with the rate of the layer feeding it.

    ``rates[0]`` is the input rate, as returned by ``snn.measure_spike_rates``.
    """
    if len(rates) < len(architecture) - 1:
        raise ConfigError(f"need {len(architecture) - 1} presynaptic rates, got {len(rates)}")
    return [(architecture[k], architecture[k + 1], rates[k]) for k in range(len(architecture) - 1)]


def lower_bound_patch_energy(flops: float, k: EnergyConstants = DEFAULT_CONSTANTS) -> float:
    if flops < 0:
        raise DomainError("FLOPs must be non-negative")
    return flops * k.add_energy


def chip_count(channels: int, pols: int = 1, mode: str = "full", k: EnergyConstants = DEFAULT_CONSTANTS) -> Fraction:
    """Xylo chips needed: ``N*P/16`` for full polarisation, ``ceil(N/15)`` for DoP."""
    _check_mode(mode)
    if channels < 1 or pols < 1:
        raise DomainError("channels and polarisations must be >= 1")
    if mode == "full":
        return Fraction(channels * pols, k.xylo_inputs)
    return Fraction(-(-channels // k.dop_channels_per_chip))


def upper_bound_power(channels: int, pols: int = 1, mode: str = "full",
                      k: EnergyConstants = DEFAULT_CONSTANTS) -> Fraction:
    """Upper-bound power in watts, as an exact ``Fraction``."""
    return chip_count(channels, pols, mode, k) * k.exact("xylo_max_power")


def spectrogram_patch_count(mode: str, channels: int = 512, patch: int | None = None) -> int:
    """Patches per ``channels x channels`` spectrogram: ``(512/4)^2`` or ``ceil(512/15)^2``."""
    _check_mode(mode)
    if patch is None:
        patch = 4 if mode == "full" else 15
    if patch < 1:
        raise DomainError("patch size must be >= 1")
    return math.ceil(channels / patch) ** 2


@dataclass
class EnergyReport:
    mode: str
    flops_snn: float
    patch_energy: float
    patch_count: int
    cadence_hz: float
    inference_rate: float
    chips: float
    lower: float
    upper: float
    balanced: float
    balanced_mode: str
    constants: dict
    convention: str = CONVENTION

    def to_dict(self) -> dict:
        return asdict(self)


def spectrogram_lower_bound(patch_energy: float, patch_count: int, cadence_hz: float = 1.0) -> float:
    return patch_energy * patch_count * cadence_hz


def spectrogram_report(flops: float, mode: str, k: EnergyConstants = DEFAULT_CONSTANTS,
                       cadence_hz: float = 1.0, channels: int = 512, pols: int = 4,
                       balanced_mode: str = "per-chip", patch_count: int | None = None,
                       patch_energy: float | None = None) -> EnergyReport:
    """Lower, upper and balanced power for a whole spectrogram.

    ``balanced`` adds idle power to the lower bound, either once
    (``single-chip``) or once per chip the upper bound assumes
    (``per-chip``). ``patch_energy`` overrides the FLOPs-derived value.
    """
    _check_mode(mode)
    if cadence_hz <= 0:
        raise ConfigError("cadence must be positive")
    if balanced_mode not in ("per-chip", "single-chip"):
        raise ConfigError(f"unknown balanced_mode {balanced_mode!r}")
    if patch_count is None:
        patch_count = spectrogram_patch_count(mode, channels)
    if patch_energy is None:
        patch_energy = lower_bound_patch_energy(flops, k)
    pols_used = pols if mode == "full" else 1
    chips = chip_count(channels, pols_used, mode, k)
    lower = spectrogram_lower_bound(patch_energy, patch_count, cadence_hz)
    idle_chips = chips if balanced_mode == "per-chip" else 1
    return EnergyReport(
        mode=mode,
        flops_snn=float(flops),
        patch_energy=patch_energy,
        patch_count=patch_count,
        cadence_hz=cadence_hz,
        inference_rate=patch_count * cadence_hz,
        chips=float(chips),
        lower=lower,
        upper=float(upper_bound_power(channels, pols_used, mode, k)),
        balanced=lower + float(idle_chips * k.exact("xylo_idle_power")),
        balanced_mode=balanced_mode,
        constants=asdict(k),
    )


def published_discrepancies(k: EnergyConstants = DEFAULT_CONSTANTS) -> dict:
    """Compare published Xylo estimates with what the stated formulas give."""
    out = {}
    for mode, pub in PUBLISHED_XYLO_ESTIMATES.items():
        rep = spectrogram_report(pub["flops"], mode, k, patch_energy=pub["patch_energy"])
        out[mode] = {
            "lower": (rep.lower, pub["lower"]),
            "upper": (rep.upper, pub["upper"]),
            "balanced_per_chip": (rep.balanced, pub["balanced"]),
            "balanced_single_chip": (
                spectrogram_report(pub["flops"], mode, k, patch_energy=pub["patch_energy"],
                                   balanced_mode="single-chip").balanced,
                pub["balanced"],
            ),
            "patch_energy_from_flops": (lower_bound_patch_energy(pub["flops"], k), pub["patch_energy"]),
        }
    return out


def format_table(reports: dict[str, EnergyReport]) -> str:
    """Text table with FLOPs, patch energy and lower/upper/balanced columns."""
    w = max([16] + [len(n) + 2 for n in reports])
    head = f"{'Model':<{w}}{'FLOPs_SNN':>14}{'Patch (uJ)':>12}{'Lower (mW)':>12}{'Upper (mW)':>12}{'Balanced (mW)':>15}"
    lines = [head, "-" * len(head)]
    for name, r in reports.items():
        lines.append(
            f"{name:<{w}}{r.flops_snn:>14.0f}{r.patch_energy * 1e6:>12.4g}{r.lower * 1e3:>12.4g}"
            f"{r.upper * 1e3:>12.4g}{r.balanced * 1e3:>15.4g}"
        )
    lines.append(f"({CONVENTION})")
    return "\n".join(lines)
