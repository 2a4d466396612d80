"""Threshold detectors, click streams, coincidence counting and the estimators
built on them (HSP rate, CAR, heralded g2, Klyshko efficiency)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .spectral import db_to_transmission

DEFAULT_DARK_RATE_HZ = 100.0
# Signal photons through the 12.5 GHz output filter whose idler twin falls
# inside the 6.5 GHz heralding channel.
BANDWIDTH_MISMATCH_RATIO = 6.5 / 12.5


@dataclass(frozen=True)
class DetectorConfig:
    label: str
    efficiency: float = 1.0
    dark_count_rate: float = DEFAULT_DARK_RATE_HZ  # Hz

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_count_rate < 0:
            raise ValueError("dark_count_rate must be >= 0")

    @classmethod
    def from_loss_db(cls, label: str, loss_db: float, dark_count_rate: float = DEFAULT_DARK_RATE_HZ):
        return cls(label, float(db_to_transmission(loss_db)), dark_count_rate)

    def dark_probability(self, bin_width_s: float) -> float:
        return -math.expm1(-self.dark_count_rate * bin_width_s)


@dataclass
class ClickStream:
    label: str
    bins: np.ndarray

    def __post_init__(self):
        self.bins = np.ascontiguousarray(self.bins, dtype=np.int64)
        if self.bins.ndim != 1:
            raise ValueError("bins must be one-dimensional")
        if self.bins.size > 1 and np.any(np.diff(self.bins) <= 0):
            raise ValueError("click bins must be strictly increasing")

    def __len__(self):
        return int(self.bins.size)

    def union(self, other: "ClickStream", label: str | None = None) -> "ClickStream":
        return ClickStream(label or f"{self.label}|{other.label}", np.union1d(self.bins, other.bins))

    def intersect(self, other: "ClickStream", label: str | None = None) -> "ClickStream":
        return ClickStream(label or f"{self.label}&{other.label}", np.intersect1d(self.bins, other.bins, assume_unique=True))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_index", "count"])
        for b in self.bins:
            w.writerow([int(b), 1])
        return buf.getvalue()


def merge_streams(streams: Sequence[ClickStream], label: str) -> ClickStream:
    if not streams:
        return ClickStream(label, np.empty(0, dtype=np.int64))
    return ClickStream(label, np.unique(np.concatenate([s.bins for s in streams])))


@dataclass
class CoincidenceHistogram:
    delays: np.ndarray
    counts: np.ndarray
    total_bins: int

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.delays.shape != self.counts.shape:
            raise ValueError("delays and counts must align")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        if not np.array_equal(self.delays, other.delays):
            raise ValueError("cannot merge histograms with different delay axes")
        return CoincidenceHistogram(self.delays, self.counts + other.counts, self.total_bins + other.total_bins)

    def at(self, delay: int) -> int:
        idx = np.flatnonzero(self.delays == delay)
        if idx.size == 0:
            raise KeyError(delay)
        return int(self.counts[idx[0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delay", "count"])
        for d, c in zip(self.delays, self.counts):
            w.writerow([int(d), int(c)])
        return buf.getvalue()


@dataclass
class MetricsReport:
    hsp_rate: float  # kHz
    hsp_rate_err: float
    car: float
    car_err: float
    g2_zero: float
    g2_zero_err: float
    heralding_efficiency: float
    herald_rate: float = math.nan  # kHz
    car_lower_bound: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("hsp_rate_err", "car_err", "g2_zero_err"):
            v = getattr(self, name)
            if not (math.isnan(v) or v >= 0):
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        out = {
            "hsp_rate_khz": self.hsp_rate,
            "hsp_rate_khz_err": self.hsp_rate_err,
            "herald_rate_khz": self.herald_rate,
            "car": self.car,
            "car_err": self.car_err,
            "car_lower_bound": self.car_lower_bound,
            "g2_zero": self.g2_zero,
            "g2_zero_err": self.g2_zero_err,
            "heralding_efficiency": self.heralding_efficiency,
        }
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# Detector emulation


def detect(counts, config: DetectorConfig, rng: np.random.Generator, bin_width_s: float = 0.0, start: int = 0) -> ClickStream:
    """Click where 1 - (1-eta)^n (1-p_dark) says so; no photon-number resolution."""
    n = np.asarray(counts)
    if np.any(n < 0):
        raise ValueError("photon counts must be >= 0")
    p_dark = config.dark_probability(bin_width_s)
    p_click = 1.0 - (1.0 - config.efficiency) ** n * (1.0 - p_dark)
    fired = rng.random(n.shape) < p_click
    return ClickStream(config.label, start + np.flatnonzero(fired))


def hbt_split(photons, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Route each photon to port A or B of a 50:50 splitter."""
    n = np.asarray(photons, dtype=np.int64)
    a = rng.binomial(n, 0.5)
    return a, n - a


# ---------------------------------------------------------------------------
# Coincidences


def coincidence_count(a: ClickStream, b: ClickStream, delay: int = 0, window: int = 1) -> int:
    """Pairs (t_a, t_b) whose offset t_b - t_a lies in a ``window``-bin span around ``delay``.

    The span is delay - (window - 1) // 2 ... delay + window // 2, so a window
    of w bins always covers exactly w delays.
    """
    if window < 1:
        raise ValueError("window must be at least one bin")
    lo = np.searchsorted(b.bins, a.bins + delay - (window - 1) // 2, side="left")
    hi = np.searchsorted(b.bins, a.bins + delay + window // 2, side="right")
    return int((hi - lo).sum())


def coincidence_histogram(a: ClickStream, b: ClickStream, max_delay: int, total_bins: int = 0) -> CoincidenceHistogram:
    """Counts of t_b - t_a for every delay in [-max_delay, max_delay]."""
    counts = kernels.delay_histogram(a.bins, b.bins, int(max_delay))
    return CoincidenceHistogram(np.arange(-max_delay, max_delay + 1), counts, total_bins)


def triple_coincidences(h: ClickStream, a: ClickStream, b: ClickStream, tau: int = 0) -> int:
    """Bins t with herald and B clicks at t and an A click at t + tau."""
    hb = np.intersect1d(h.bins, b.bins, assume_unique=True)
    return int(np.isin(hb + tau, a.bins, assume_unique=True).sum())


@dataclass(frozen=True)
class CarResult:
    value: float
    error: float
    coincidences: int
    accidentals: float  # per delay, averaged
    lower_bound: bool


def car(
    signal: ClickStream,
    herald: ClickStream,
    true_delay: int = 0,
    accidental_delay: int | Sequence[int] = 10,
    window: int = 1,
) -> CarResult:
    """C(true) / C(accidental); several accidental delays are averaged.

    With no accidentals the value assumes one accidental count and is flagged
    as a lower bound.
    """
    delays = np.atleast_1d(np.asarray(accidental_delay, dtype=np.int64))
    if np.any(np.abs(delays - true_delay) < max(1, window)):
        raise ValueError("accidental delays must sit at least one window away from the peak")
    c_true = coincidence_count(herald, signal, true_delay, window)
    if delays.size > 8:
        hist = coincidence_histogram(herald, signal, int(np.abs(delays).max() + window))
        idx = delays + hist.delays[-1]
        acc_total = sum(int(hist.counts[i - (window - 1) // 2 : i + window // 2 + 1].sum()) for i in idx)
    else:
        acc_total = sum(coincidence_count(herald, signal, int(d), window) for d in delays)
    n_acc = delays.size
    if acc_total == 0:
        value = c_true * n_acc
        return CarResult(float(value), math.nan, c_true, 0.0, True)
    acc = acc_total / n_acc
    value = c_true / acc
    err = value * math.sqrt((1.0 / c_true if c_true else 0.0) + 1.0 / acc_total)
    return CarResult(value, err, c_true, acc, False)


@dataclass(frozen=True)
class G2Curve:
    tau: np.ndarray
    g2: np.ndarray
    err: np.ndarray
    valid: np.ndarray


def g2_heralded(c_abh, c_ah, c_bh: float, h: float, tau=None) -> G2Curve:
    """g2(tau) = C_ABH(tau) H / (C_AH(tau) C_BH(0)) with first-order Poisson errors.

    Works on counts or on expected (fractional) counts; points whose
    denominator vanishes are flagged invalid and set to nan.
    """
    if not h > 0 or not c_bh > 0:
        raise ValueError("herald count and C_BH(0) must be positive")
    c_abh = np.atleast_1d(np.asarray(c_abh, dtype=float))
    c_ah = np.atleast_1d(np.asarray(c_ah, dtype=float))
    valid = c_ah > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(valid, c_abh * h / (c_ah * c_bh), np.nan)
        rel = np.sqrt(
            np.where(c_abh > 0, 1.0 / c_abh, 0.0) + np.where(valid, 1.0 / c_ah, 0.0) + 1.0 / c_bh + 1.0 / h
        )
        # zero three-fold counts: one-count upper spread
        err = np.where(c_abh > 0, g2 * rel, np.where(valid, h / (c_ah * c_bh), np.nan))
    tau = np.arange(c_abh.size) if tau is None else np.asarray(tau)
    return G2Curve(tau, g2, err, valid)


def klyshko_efficiency(coincidences: float, herald_singles: float) -> float:
    """Collection efficiency of the arm opposite to the conditioning singles."""
    if not herald_singles > 0:
        raise ValueError("herald_singles must be positive")
    return coincidences / herald_singles


def expected_heralding_collection(transmission: float, ratio: float = BANDWIDTH_MISMATCH_RATIO) -> float:
    """Heralding-arm Klyshko efficiency predicted from its transmission.

    Only the fraction ``ratio`` of signal photons passing the wide output filter
    have their twin inside the narrow heralding channel.
    """
    return transmission * ratio


def poisson_rate(count: float, seconds: float) -> tuple[float, float]:
    return count / seconds, math.sqrt(count) / seconds
