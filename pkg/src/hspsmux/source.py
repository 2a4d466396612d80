"""Photon-pair generation: mean pair number per bin and thermal sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .spectral import HERALD_FWHM_GHZ

# Coherence-time bin of a 6.5 GHz channel, ns.
DEFAULT_BIN_NS = 1.0 / HERALD_FWHM_GHZ


@dataclass(frozen=True)
class CwBinned:
    bin_width: float = DEFAULT_BIN_NS  # ns

    kind = "cw_binned"

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")


@dataclass(frozen=True)
class Pulsed:
    rep_rate: float = 500.0  # MHz
    pulse_fwhm: float = 65.0  # ps
    peak_power: float = 25.0  # mW

    kind = "pulsed"

    def __post_init__(self):
        if not (self.rep_rate > 0 and self.pulse_fwhm > 0 and self.peak_power >= 0):
            raise ValueError("invalid pulsed pump parameters")


@dataclass(frozen=True)
class SourceConfig:
    """Pump and pair-generation settings.

    ``gain_coefficient`` is the mean pair number per coherence bin per mode at
    1 mW (for the default quadratic law, per mW^2).  For pulsed pumping a pulse
    counts as one bin and carries ``gain * peak**exponent * fwhm/coherence_bin``
    pairs per mode.
    """

    pump_power: float = 0.0  # mW
    pump_mode: CwBinned | Pulsed = CwBinned()
    gain_coefficient: float = 1e-4
    mode_count: int = 3
    power_exponent: float = 2.0
    coherence_bin: float = DEFAULT_BIN_NS  # ns

    def __post_init__(self):
        if self.pump_power < 0:
            raise ValueError("pump_power must be >= 0")
        if not self.gain_coefficient > 0:
            raise ValueError("gain_coefficient must be > 0")
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if not self.power_exponent > 0:
            raise ValueError("power_exponent must be > 0")

    @property
    def bin_width_s(self) -> float:
        if isinstance(self.pump_mode, Pulsed):
            return 1e-6 / self.pump_mode.rep_rate
        return self.pump_mode.bin_width * 1e-9

    @property
    def bin_rate(self) -> float:
        return 1.0 / self.bin_width_s


def mean_pairs_per_bin(config: SourceConfig, mode_index: int = 0) -> float:
    if not 0 <= mode_index < config.mode_count:
        raise IndexError(f"mode index {mode_index} outside 0..{config.mode_count - 1}")
    g = config.gain_coefficient
    if isinstance(config.pump_mode, Pulsed):
        p = config.pump_mode
        return g * p.peak_power**config.power_exponent * (p.pulse_fwhm * 1e-3 / config.coherence_bin)
    return g * config.pump_power**config.power_exponent


def sample_pair_numbers(rng: np.random.Generator, mu: float, size=None):
    """Draw from p(n) = mu^n / (1+mu)^(n+1)."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    return rng.geometric(1.0 / (1.0 + mu), size=size) - 1


def photon_number_distribution(mu: float, n_max: int) -> tuple[np.ndarray, float]:
    """Thermal probabilities p(0..n_max) and the truncated tail mass."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    x = mu / (1.0 + mu)
    n = np.arange(n_max + 1)
    probs = (1.0 - x) * x**n
    return probs, float(x ** (n_max + 1))


def thermal_g2(samples) -> float:
    """<n(n-1)>/<n>^2 of a sample of photon numbers."""
    n = np.asarray(samples, dtype=float)
    return float(np.mean(n * (n - 1.0)) / np.mean(n) ** 2)


@dataclass(frozen=True)
class PairBatch:
    bin_index: int
    pairs_per_mode: tuple[int, ...]


def sample_pair_batches(
    rng: np.random.Generator, config: SourceConfig, n_bins: int, start: int = 0
) -> Iterator[PairBatch]:
    """Dense per-bin sampling; only bins with at least one pair are yielded."""
    mus = [mean_pairs_per_bin(config, m) for m in range(config.mode_count)]
    counts = np.stack([sample_pair_numbers(rng, mu, n_bins) for mu in mus], axis=1)
    for i in np.flatnonzero(counts.any(axis=1)):
        yield PairBatch(start + int(i), tuple(int(c) for c in counts[i]))
