"""Spectral modes, Gaussian channel filters and the joint spectral intensity.

Frequencies are in THz, widths and offsets in GHz.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

FOUR_LN2 = 4.0 * math.log(2.0)

# Three-channel mode grid (THz).
F_I1, F_I2, F_I3 = 193.4992, 193.5117, 193.5242
F_SPLUS, F_S0, F_SMINUS = 195.7006, 195.6881, 195.6756
MODE_SPACING_GHZ = 12.5
HERALD_FWHM_GHZ = 6.5
TNF_FWHM_GHZ = 12.5
PUMP_BANDWIDTH_GHZ = 6.4
# Energy-conservation sum pinned to the mode grid, not to the quoted pump wavelength.
F2P_THZ = F_S0 + F_I2
HERALD_CHANNEL_LOSS_DB = (4.58, 4.58, 4.60)
HERALD_EXCESS_LOSS_DB = (1.0, 0.0, 0.0)


def db_to_transmission(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SpectralMode:
    label: str
    center_frequency: float
    fwhm: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")

    def transmission(self, f):
        return filter_transmission(self, f)


def filter_transmission(mode: SpectralMode, f):
    """Gaussian passband with unit peak at the mode center."""
    detuning_ghz = (np.asarray(f, dtype=float) - mode.center_frequency) * 1e3
    out = np.exp(-FOUR_LN2 * (detuning_ghz / mode.fwhm) ** 2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FilterBank:
    channels: tuple[SpectralMode, ...]
    insertion_loss_db: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "insertion_loss_db", tuple(float(x) for x in self.insertion_loss_db))
        if len(self.channels) != len(self.insertion_loss_db):
            raise ValueError("one insertion loss per channel is required")
        centers = [c.center_frequency for c in self.channels]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError("channels must be sorted by strictly increasing center frequency")
        if any(x < 0 for x in self.insertion_loss_db):
            raise ValueError("insertion losses must be non-negative")

    def __len__(self):
        return len(self.channels)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center_frequency for c in self.channels])

    def index(self, label: str) -> int:
        for i, c in enumerate(self.channels):
            if c.label == label:
                return i
        raise KeyError(label)

    def transmission(self, index: int, f):
        """Channel passband including its insertion loss."""
        return filter_transmission(self.channels[index], f) * float(db_to_transmission(self.insertion_loss_db[index]))


def heralding_bank(
    channel_loss_db: Sequence[float] = HERALD_CHANNEL_LOSS_DB,
    excess_loss_db: Sequence[float] = HERALD_EXCESS_LOSS_DB,
) -> FilterBank:
    """Narrowband DWDM on the idler arm: f_i1, f_i2, f_i3 at 12.5 GHz spacing, 6.5 GHz wide."""
    modes = tuple(
        SpectralMode(label, f, HERALD_FWHM_GHZ)
        for label, f in (("f_i1", F_I1), ("f_i2", F_I2), ("f_i3", F_I3))
    )
    losses = tuple(a + b for a, b in zip(channel_loss_db, excess_loss_db))
    return FilterBank(modes, losses)


@dataclass(frozen=True)
class ModeGrid:
    """Discrete spectral modes indexed by heralding channel.

    Mode ``m`` pairs idler channel ``m`` (ascending idler frequency) with the
    signal mode on the opposite side of the energy-conservation line, so mode 0
    is (f_i1, f_s+) and the last mode is (f_i3, f_s-) for three modes.
    """

    mode_count: int = 3
    spacing_ghz: float = MODE_SPACING_GHZ
    center_signal: float = F_S0
    center_idler: float = F_I2

    def __post_init__(self):
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")

    @property
    def center_index(self) -> int:
        return self.mode_count // 2

    def signal_offset_ghz(self, m: int) -> float:
        return (self.center_index - m) * self.spacing_ghz

    def signal_frequency(self, m: int) -> float:
        return self.center_signal + self.signal_offset_ghz(m) / 1e3

    def idler_frequency(self, m: int) -> float:
        return self.center_idler - self.signal_offset_ghz(m) / 1e3

    def signal_label(self, m: int) -> str:
        off = self.signal_offset_ghz(m)
        if off == 0:
            return "f_s0"
        steps = int(round(abs(off) / self.spacing_ghz))
        sign = "+" if off > 0 else "-"
        return f"f_s{sign}" if steps == 1 else f"f_s{sign}{steps}"

    def idler_label(self, m: int) -> str:
        return f"f_i{m + 1}"


# ---------------------------------------------------------------------------
# Joint spectral intensity


def jsi_value(
    f_s,
    f_i,
    pump_bandwidth: float = PUMP_BANDWIDTH_GHZ,
    signal_filters: FilterBank | None = None,
    idler_filters: FilterBank | None = None,
    f2p: float = F2P_THZ,
):
    """Energy-conservation ridge, optionally multiplied by filter banks.

    The ridge is Gaussian in ``f_s + f_i - f2p``; moving both frequencies by
    +x from the ridge center gives half maximum at x = pump_bandwidth / 2.
    A bank contributes the sum of its channel transmissions (channels are
    disjoint in practice), each attenuated by the channel insertion loss.
    """
    if not pump_bandwidth > 0:
        raise ValueError("pump_bandwidth must be positive")
    f_s = np.asarray(f_s, dtype=float)
    f_i = np.asarray(f_i, dtype=float)
    detune_ghz = (f_s + f_i - f2p) * 1e3
    out = np.exp(-FOUR_LN2 * (detune_ghz / (2.0 * pump_bandwidth)) ** 2)
    if signal_filters is not None:
        out = out * sum(signal_filters.transmission(k, f_s) for k in range(len(signal_filters)))
    if idler_filters is not None:
        out = out * sum(idler_filters.transmission(k, f_i) for k in range(len(idler_filters)))
    return float(out) if out.ndim == 0 else out


@dataclass
class JsiGrid:
    signal_axis: np.ndarray
    idler_axis: np.ndarray
    intensity: np.ndarray  # shape (len(idler_axis), len(signal_axis))

    def __post_init__(self):
        self.signal_axis = np.asarray(self.signal_axis, dtype=float)
        self.idler_axis = np.asarray(self.idler_axis, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.intensity.shape != (self.idler_axis.size, self.signal_axis.size):
            raise ValueError("intensity shape must be (len(idler_axis), len(signal_axis))")
        if np.any(self.intensity < 0) or not np.all(np.isfinite(self.intensity)):
            raise ValueError("intensity must be finite and non-negative")

    def signal_marginal(self) -> np.ndarray:
        return self.intensity.sum(axis=0)

    def idler_marginal(self) -> np.ndarray:
        return self.intensity.sum(axis=1)

    def islands(self, rel_threshold: float = 0.05) -> list[tuple[float, float]]:
        """Local maxima above ``rel_threshold`` of the global maximum, as (f_s, f_i)."""
        img = self.intensity
        peak = ndimage.maximum_filter(img, size=3, mode="constant", cval=-np.inf)
        mask = (img == peak) & (img > rel_threshold * img.max())
        ii, jj = np.nonzero(mask)
        return [(float(self.signal_axis[j]), float(self.idler_axis[i])) for i, j in zip(ii, jj)]

    def anti_diagonal_fwhm(self) -> float:
        """Per-axis FWHM (GHz) of the cut through the global maximum along (+f_s, +f_i).

        Uses a least-squares parabola on log intensity, exact for a Gaussian ridge.
        """
        step_s = np.diff(self.signal_axis).mean() * 1e3
        step_i = np.diff(self.idler_axis).mean() * 1e3
        if not math.isclose(step_s, step_i, rel_tol=1e-6):
            raise ValueError("anti-diagonal cut needs equal axis steps")
        # the ridge maximum is degenerate along the ridge; anchor the cut nearest the grid centre
        rows, cols = np.nonzero(self.intensity >= self.intensity.max() * (1.0 - 1e-9))
        centre = (np.array(self.intensity.shape) - 1) / 2.0
        pick = np.argmin((rows - centre[0]) ** 2 + (cols - centre[1]) ** 2)
        i0, j0 = int(rows[pick]), int(cols[pick])
        ks, vals = [], []
        for k in range(-max(self.intensity.shape), max(self.intensity.shape) + 1):
            i, j = i0 + k, j0 + k
            if 0 <= i < self.intensity.shape[0] and 0 <= j < self.intensity.shape[1]:
                ks.append(k)
                vals.append(self.intensity[i, j])
        x = np.array(ks) * step_s
        v = np.array(vals)
        keep = v > 1e-3 * v.max()
        if keep.sum() < 3:
            raise ValueError("anti-diagonal cut resolves fewer than three points; refine the grid")
        curv = np.polyfit(x[keep], np.log(v[keep]), 2)[0]
        return math.sqrt(FOUR_LN2 / -curv)

    def to_csv(self, stream=None) -> str:
        buf = io.StringIO() if stream is None else stream
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["idler_THz\\signal_THz"] + [f"{f:.7f}" for f in self.signal_axis])
        for f_i, row in zip(self.idler_axis, self.intensity):
            w.writerow([f"{f_i:.7f}"] + [f"{v:.6g}" for v in row])
        return buf.getvalue() if stream is None else ""

    @classmethod
    def from_csv(cls, text: str) -> "JsiGrid":
        rows = list(csv.reader(io.StringIO(text)))
        signal = [float(x) for x in rows[0][1:]]
        idler = [float(r[0]) for r in rows[1:]]
        body = [[float(x) for x in r[1:]] for r in rows[1:]]
        return cls(np.array(signal), np.array(idler), np.array(body))


JSI_SCENARIOS = ("A", "B", "C")


@dataclass
class JsiSweepConfig:
    scenario: str = "A"
    signal_start: float = 195.6631
    signal_stop: float = 195.7131
    idler_start: float = 193.4867
    idler_stop: float = 193.5367
    step_ghz: float = 2.5
    pump_bandwidth: float = PUMP_BANDWIDTH_GHZ
    shift_efficiency: float = 0.90
    channel_loss_db: tuple[float, ...] = HERALD_CHANNEL_LOSS_DB
    excess_loss_db: tuple[float, ...] = HERALD_EXCESS_LOSS_DB
    grid: ModeGrid = field(default_factory=ModeGrid)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        def axis(start, stop):
            n = int(round((stop - start) * 1e3 / self.step_ghz))
            return np.round(start + np.arange(n + 1) * self.step_ghz / 1e3, 7)

        return axis(self.signal_start, self.signal_stop), axis(self.idler_start, self.idler_stop)


def jsi_sweep(config: JsiSweepConfig) -> JsiGrid:
    """Emulate the swept-filter coincidence map.

    A: bare ridge.  B: idler narrowband bank applied, no feed-forward.
    C: as B, with the side-channel islands moved onto the central signal row
    with probability ``shift_efficiency`` (failed shifts stay in place).
    """
    if config.scenario not in JSI_SCENARIOS:
        raise ValueError(f"unknown JSI scenario {config.scenario!r}; expected one of {JSI_SCENARIOS}")
    sig, idl = config.axes()
    fs, fi = np.meshgrid(sig, idl)
    f2p = config.grid.center_signal + config.grid.center_idler
    if config.scenario == "A":
        return JsiGrid(sig, idl, jsi_value(fs, fi, config.pump_bandwidth, f2p=f2p))

    bank = heralding_bank(config.channel_loss_db, config.excess_loss_db)
    out = np.zeros_like(fs)
    for k in range(len(bank)):
        herald = bank.transmission(k, fi)
        # channel k heralds the signal mode whose offset must be undone
        shift_thz = -config.grid.signal_offset_ghz(k) / 1e3
        stay = jsi_value(fs, fi, config.pump_bandwidth, f2p=f2p)
        if config.scenario == "B" or shift_thz == 0.0:
            out += herald * stay
        else:
            moved = jsi_value(fs - shift_thz, fi, config.pump_bandwidth, f2p=f2p)
            eff = config.shift_efficiency
            out += herald * (eff * moved + (1.0 - eff) * stay)
    return JsiGrid(sig, idl, out)
