"""Two-photon interference between the multiplexed source and a weak coherent state."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

DEFAULT_MODE_OVERLAP = 0.97
DEFAULT_PURITY_FACTOR = 0.8116


def coincidence_probability(n1, n2, g2_1, g2_2, i12):
    """Relative two-detector coincidence probability behind a balanced splitter."""
    i12 = np.asarray(i12, dtype=float)
    if np.any((i12 < 0) | (i12 > 1)):
        raise ValueError("i12 must lie in [0, 1]")
    out = 0.25 * (g2_1 * n1**2 + g2_2 * n2**2 + 2.0 * n1 * n2 - 2.0 * n1 * n2 * i12)
    return float(out) if np.ndim(out) == 0 else out


def visibility(n1: float, n2: float, g2_1: float, g2_2: float, i12: float = 1.0) -> float:
    """(wing - dip) / wing for the coincidence probability above."""
    wing = coincidence_probability(n1, n2, g2_1, g2_2, 0.0)
    if wing <= 0:
        raise ValueError("no coincidences at the wings")
    return (wing - coincidence_probability(n1, n2, g2_1, g2_2, i12)) / wing


def visibility_two_fold(n1: float, n2: float) -> float:
    """Thermal arm 1 against coherent arm 2."""
    if not (n1 > 0 and n2 > 0):
        raise ValueError("mean photon numbers must be positive")
    return 2.0 / (2.0 * n1 / n2 + n2 / n1 + 2.0)


def visibility_three_fold(n1: float, n2: float) -> float:
    """Heralded single photon in arm 1 against coherent arm 2."""
    if not n1 > 0:
        raise ValueError("n1 must be positive")
    if n2 < 0:
        raise ValueError("n2 must be >= 0")
    return 2.0 / (n2 / n1 + 2.0)


def external_bandwidth(pump_bw: float, herald_bw: float) -> float:
    """Heralded signal bandwidth set by the doubled pump and the herald channel (GHz).

    The second-harmonic pump driving the down-conversion is sqrt(2) wider than
    the fundamental pulse.
    """
    return math.sqrt(2.0 * pump_bw**2 + herald_bw**2)


def gaussian_overlap(w1: float, w2: float) -> float:
    """|<psi1|psi2>|^2 for Gaussian spectra with intensity FWHMs w1 and w2."""
    if not (w1 > 0 and w2 > 0):
        raise ValueError("bandwidths must be positive")
    return 2.0 * w1 * w2 / (w1**2 + w2**2)


def bandwidth_correction(pump_bw: float, herald_bw: float, filter_bw: float) -> float:
    """Mode-overlap factor between the heralded photon and the filtered coherent pulse."""
    if min(pump_bw, herald_bw, filter_bw) <= 0:
        raise ValueError("bandwidths must be positive")
    heralded = external_bandwidth(pump_bw, herald_bw)
    coherent = math.sqrt(filter_bw**2 + pump_bw**2)
    return gaussian_overlap(heralded, coherent)


def single_photon_replacement_visibility(g2: float, mode_overlap: float = DEFAULT_MODE_OVERLAP) -> float:
    """Expected visibility against an ideal single photon: M - (1 + M) g2, clipped to [0, 1]."""
    return float(min(1.0, max(0.0, mode_overlap - (1.0 + mode_overlap) * g2)))


def coherence_time_ps(bandwidth_ghz: float) -> float:
    """1/e half-width of the dip for a Gaussian spectrum of intensity FWHM ``bandwidth_ghz``."""
    return math.sqrt(2.0 * math.log(2.0)) / (math.pi * bandwidth_ghz) * 1e3


@dataclass(frozen=True)
class HomConfig:
    n_bar_1: float = 0.01
    n_bar_2: float = 0.01
    g2_arm1: float = 0.014  # heralded arm, conditions the three-fold
    g2_arm2: float = 1.0
    g2_thermal: float = 2.0  # unheralded arm 1, conditions the two-fold
    pump_bandwidth: float = 6.4
    herald_bandwidth: float = 6.5
    output_filter_bandwidth: float = 12.5
    delay_scan: tuple[float, ...] = tuple(float(x) for x in range(-150, 151, 10))
    bandwidth_factor: float | None = DEFAULT_MODE_OVERLAP  # None: use the Gaussian overlap
    purity_factor: float = DEFAULT_PURITY_FACTOR
    include_purity: bool = False
    wing_counts_two_fold: float = 4000.0
    wing_counts_three_fold: float = 400.0
    n_fits: int = 1000
    noise: bool = True

    def __post_init__(self):
        object.__setattr__(self, "delay_scan", tuple(float(x) for x in self.delay_scan))
        if self.n_bar_1 < 0 or self.n_bar_2 < 0:
            raise ValueError("mean photon numbers must be >= 0")
        if min(self.pump_bandwidth, self.herald_bandwidth, self.output_filter_bandwidth) <= 0:
            raise ValueError("bandwidths must be positive")
        if not 0 < self.purity_factor <= 1:
            raise ValueError("purity_factor must lie in (0, 1]")
        if self.bandwidth_factor is not None and not 0 <= self.bandwidth_factor <= 1:
            raise ValueError("bandwidth_factor must lie in [0, 1]")

    def mode_overlap(self) -> float:
        if self.bandwidth_factor is not None:
            return self.bandwidth_factor
        return bandwidth_correction(self.pump_bandwidth, self.herald_bandwidth, self.output_filter_bandwidth)

    def dip_bandwidth(self) -> float:
        return min(self.output_filter_bandwidth, external_bandwidth(self.pump_bandwidth, self.herald_bandwidth))

    def tau_c(self) -> float:
        return coherence_time_ps(self.dip_bandwidth())


def interference_factor(delays_ps, config: HomConfig, three_fold: bool) -> np.ndarray:
    peak = config.mode_overlap()
    if three_fold and config.include_purity:
        peak *= config.purity_factor
    t = np.asarray(delays_ps, dtype=float)
    return peak * np.exp(-((t / config.tau_c()) ** 2))


def _dip(t, amp, vis, t0, width):
    return amp * (1.0 - vis * np.exp(-(((t - t0) / width) ** 2)))


@dataclass
class DipFit:
    visibility: float
    visibility_std: float
    fit_variance: float
    n_fits: int


@dataclass
class DipCurve:
    delays: np.ndarray
    two_fold: np.ndarray
    two_fold_err: np.ndarray
    three_fold: np.ndarray
    three_fold_err: np.ndarray
    fit_two_fold: DipFit
    fit_three_fold: DipFit
    expected_two_fold: float = math.nan
    expected_three_fold: float = math.nan
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delay_ps", "two_fold", "two_fold_err", "three_fold", "three_fold_err"])
        for row in zip(self.delays, self.two_fold, self.two_fold_err, self.three_fold, self.three_fold_err):
            w.writerow([f"{v:.6g}" for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "two_fold_visibility": self.fit_two_fold.visibility,
            "two_fold_visibility_std": self.fit_two_fold.visibility_std,
            "three_fold_visibility": self.fit_three_fold.visibility,
            "three_fold_visibility_std": self.fit_three_fold.visibility_std,
            "expected_two_fold_visibility": self.expected_two_fold,
            "expected_three_fold_visibility": self.expected_three_fold,
            "n_fits": self.fit_three_fold.n_fits,
            **self.extra,
        }


def fit_dip(delays, counts, tau_guess: float) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    amp0 = max(np.median(np.concatenate([counts[:3], counts[-3:]])), 1e-12)
    vis0 = float(np.clip(1.0 - counts.min() / amp0, 0.01, 0.99))
    popt, _ = curve_fit(
        _dip,
        np.asarray(delays, dtype=float),
        counts,
        p0=(amp0, vis0, 0.0, tau_guess),
        bounds=([0.0, 0.0, -np.inf, 1e-3], [np.inf, 1.0, np.inf, np.inf]),
        maxfev=5000,
    )
    return popt


def _monte_carlo_fit(delays, expected, tau, rng, n_fits, noise) -> DipFit:
    if not noise:
        v = fit_dip(delays, expected, tau)[1]
        return DipFit(float(v), 0.0, 0.0, 1)
    vals = np.empty(n_fits)
    for i in range(n_fits):
        vals[i] = fit_dip(delays, rng.poisson(expected), tau)[1]
    var = float(vals.var(ddof=1)) if n_fits > 1 else 0.0
    return DipFit(float(vals.mean()), math.sqrt(var), var, n_fits)


def hom_dip_scan(config: HomConfig, rng: np.random.Generator) -> DipCurve:
    delays = np.asarray(config.delay_scan, dtype=float)
    tau = config.tau_c()
    if delays.size < 5 or delays.min() > -3 * tau or delays.max() < 3 * tau:
        raise ValueError(f"delay scan must reach beyond +-3 coherence times ({3 * tau:.1f} ps) to show the wings")
    n1, n2 = config.n_bar_1, config.n_bar_2
    if n1 <= 0 and n2 <= 0:
        raise ValueError("both arms are empty")

    curves, fits, expected_v = [], [], []
    for three, wing_counts, g1 in (
        (False, config.wing_counts_two_fold, config.g2_thermal),
        (True, config.wing_counts_three_fold, config.g2_arm1),
    ):
        i12 = interference_factor(delays, config, three)
        p = coincidence_probability(n1, n2, g1, config.g2_arm2, i12)
        wing = coincidence_probability(n1, n2, g1, config.g2_arm2, 0.0)
        expected = wing_counts * p / wing
        curves.append(expected)
        fits.append(_monte_carlo_fit(delays, expected, tau, rng, config.n_fits, config.noise))
        expected_v.append(visibility(n1, n2, g1, config.g2_arm2, float(i12.max())))

    if config.noise:
        observed = [rng.poisson(c).astype(float) for c in curves]
    else:
        observed = curves
    return DipCurve(
        delays=delays,
        two_fold=observed[0],
        two_fold_err=np.sqrt(observed[0]),
        three_fold=observed[1],
        three_fold_err=np.sqrt(observed[1]),
        fit_two_fold=fits[0],
        fit_three_fold=fits[1],
        expected_two_fold=expected_v[0],
        expected_three_fold=expected_v[1],
        extra={"tau_c_ps": tau, "mode_overlap": config.mode_overlap()},
    )
