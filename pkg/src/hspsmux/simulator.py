"""System model, measurement arrangements and the two Monte-Carlo estimators.

``simulate`` runs the click-level kernel and returns detector time tags.
``estimate_moments`` is an importance-sampled estimator of the per-bin
detection probabilities; it reaches the tiny three-fold probabilities at
realistic efficiencies where a click-level run would need ~1e15 bins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .detection import (
    BANDWIDTH_MISMATCH_RATIO,
    ClickStream,
    DetectorConfig,
    G2Curve,
    MetricsReport,
    car,
    coincidence_count,
    g2_heralded,
    klyshko_efficiency,
    triple_coincidences,
)
from .feedforward import NO_SHIFT, SHIFT_DOWN, SHIFT_UP, FeedForwardConfig, channel_actions, trigger_survival_probability
from .losses import HERALD_SNSPD_LOSS_DB, SIGNAL_SNSPD_LOSS_DB, LossBudget
from .source import SourceConfig, mean_pairs_per_bin
from .spectral import FOUR_LN2, HERALD_FWHM_GHZ, TNF_FWHM_GHZ, ModeGrid, db_to_transmission

N_STATES = 3  # unshifted, shifted down, shifted up
DEFAULT_ACCIDENTAL_DELAYS = tuple(range(-520, -20)) + tuple(range(21, 521))


def gaussian_passband(offset_ghz, fwhm_ghz):
    return np.exp(-FOUR_LN2 * (np.asarray(offset_ghz, dtype=float) / fwhm_ghz) ** 2)


def default_detectors(channels: int = 3, dark_count_rate: float = 100.0) -> tuple[DetectorConfig, ...]:
    herald_eta = float(db_to_transmission(HERALD_SNSPD_LOSS_DB))
    signal_eta = float(db_to_transmission(SIGNAL_SNSPD_LOSS_DB))
    dets = [DetectorConfig(f"f_i{k + 1}", herald_eta, dark_count_rate) for k in range(channels)]
    dets += [DetectorConfig("A", signal_eta, dark_count_rate), DetectorConfig("B", signal_eta, dark_count_rate)]
    return tuple(dets)


@dataclass(frozen=True)
class SystemModel:
    """Everything between the pump and the detectors.

    ``herald_capture`` is the fraction of signal photons passing the output
    filter whose twin falls inside a heralding channel; the remainder appear as
    unheralded background photons in the signal band (Poissonian, since they
    stem from many spectral modes).
    """

    source: SourceConfig = field(default_factory=SourceConfig)
    feedforward: FeedForwardConfig = field(default_factory=FeedForwardConfig)
    losses: LossBudget = field(default_factory=LossBudget)
    detectors: tuple[DetectorConfig, ...] = field(default_factory=default_detectors)
    grid: ModeGrid = field(default_factory=ModeGrid)
    output_filter_fwhm: float = TNF_FWHM_GHZ
    herald_fwhm: float = HERALD_FWHM_GHZ
    herald_capture: float = BANDWIDTH_MISMATCH_RATIO
    background: bool = True

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(self.detectors))
        m = self.grid.mode_count
        if self.source.mode_count != m or self.losses.channel_count != m:
            raise ValueError("source, loss budget and mode grid disagree on the mode count")
        labels = {d.label for d in self.detectors}
        missing = {f"f_i{k + 1}" for k in range(m)} | {"A", "B"}
        if not missing <= labels:
            raise ValueError(f"missing detectors: {sorted(missing - labels)}")
        if not 0 < self.herald_capture <= 1:
            raise ValueError("herald_capture must lie in (0, 1]")

    def detector(self, label: str) -> DetectorConfig:
        for d in self.detectors:
            if d.label == label:
                return d
        raise KeyError(label)

    def with_power(self, pump_power: float) -> "SystemModel":
        return replace(self, source=replace(self.source, pump_power=pump_power))

    def with_gain(self, gain: float) -> "SystemModel":
        return replace(self, source=replace(self.source, gain_coefficient=gain))

    def herald_efficiency(self, channel: int) -> float:
        return self.losses.herald_transmission(channel) * self.detector(f"f_i{channel + 1}").efficiency

    def signal_efficiency(self) -> float:
        return self.losses.signal_transmission()

    def background_ratio(self) -> float:
        """Unheralded-to-heralded photon ratio inside one signal mode."""
        if not self.background:
            return 0.0
        c = self.grid.center_index
        leak = sum(
            float(gaussian_passband(self.grid.signal_offset_ghz(m), self.output_filter_fwhm))
            for m in range(self.grid.mode_count)
            if m != c
        )
        return max(0.0, 1.0 / (self.herald_capture * (1.0 + leak)) - 1.0)


@dataclass(frozen=True)
class Arrangement:
    """Measurement configuration: output filter position, herald set, feed-forward."""

    multiplexed: bool = True
    mode: int | None = None

    def __post_init__(self):
        if self.multiplexed == (self.mode is not None):
            raise ValueError("use Arrangement.mux() or Arrangement.single(mode)")

    @classmethod
    def mux(cls) -> "Arrangement":
        return cls(True, None)

    @classmethod
    def single(cls, mode: int) -> "Arrangement":
        return cls(False, int(mode))

    def label(self, grid: ModeGrid) -> str:
        return "multiplexed" if self.multiplexed else grid.signal_label(self.mode)


@dataclass(frozen=True)
class BinPlan:
    """Per-bin probabilities handed to the estimators."""

    mu: np.ndarray  # thermal mean per mode
    mu_bg: np.ndarray  # Poisson background mean per mode
    route: np.ndarray  # (mode, channel) idler photon -> channel click probability
    herald_dark: np.ndarray  # per channel
    qa: np.ndarray  # (state, mode) signal photon -> A
    qb: np.ndarray
    dark_a: float
    dark_b: float
    actions: np.ndarray  # per channel
    shift_enabled: bool
    survival: float
    shift_efficiency: float
    herald_channels: np.ndarray  # bool per channel
    bin_rate: float  # bins per second
    trigger_rate_khz: float = 0.0

    @property
    def mode_count(self) -> int:
        return self.mu.size

    @property
    def channel_count(self) -> int:
        return self.herald_dark.size

    @property
    def herald_bits(self) -> int:
        return int(sum(1 << k for k in np.flatnonzero(self.herald_channels)))

    def stream_probabilities(self) -> np.ndarray:
        x = self.mu / (1.0 + self.mu)
        return np.concatenate([x, -np.expm1(-self.mu_bg), self.herald_dark, [self.dark_a, self.dark_b]])

    def state_probabilities(self, down: bool, up: bool) -> np.ndarray:
        p = np.array([1.0, 0.0, 0.0])
        if self.shift_enabled and (down != up):
            ok = self.survival * self.shift_efficiency
            p[0] = 1.0 - ok
            p[SHIFT_DOWN if down else SHIFT_UP] = ok
        return p


def side_click_probabilities(mu, route, herald_dark) -> np.ndarray:
    """P(channel k clicks in a bin) for thermal modes; exact generating function."""
    mu = np.asarray(mu, dtype=float)[:, None]
    none = np.prod(1.0 / (1.0 + mu * route), axis=0) * (1.0 - np.asarray(herald_dark))
    return 1.0 - none


def build_plan(model: SystemModel, arrangement: Arrangement) -> BinPlan:
    grid = model.grid
    m_count = grid.mode_count
    bin_s = model.source.bin_width_s
    mu = np.array([mean_pairs_per_bin(model.source, m) for m in range(m_count)])
    mu_bg = model.background_ratio() * mu

    eta_h = np.array([model.herald_efficiency(k) for k in range(m_count)])
    steps = np.subtract.outer(np.arange(m_count), np.arange(m_count)) * grid.spacing_ghz
    route = eta_h[None, :] * gaussian_passband(steps, model.herald_fwhm)
    # Gaussian channels overlap slightly; a photon takes at most one exit.
    row = route.sum(axis=1, keepdims=True)
    route = np.where(row > 1.0, route / row, route)

    herald_dark = np.array([model.detector(f"f_i{k + 1}").dark_probability(bin_s) for k in range(m_count)])
    det_a, det_b = model.detector("A"), model.detector("B")

    tnf_mode = grid.center_index if arrangement.multiplexed else arrangement.mode
    if not 0 <= tnf_mode < m_count:
        raise IndexError(f"mode {tnf_mode} outside 0..{m_count - 1}")
    ff = model.feedforward
    shifts = np.array([0.0, ff.down_shift_ghz, ff.up_shift_ghz])
    offsets = np.array([grid.signal_offset_ghz(m) for m in range(m_count)]) - grid.signal_offset_ghz(tnf_mode)
    passband = gaussian_passband(offsets[None, :] + shifts[:, None], model.output_filter_fwhm)
    eta_s = model.signal_efficiency()
    qa = 0.5 * eta_s * det_a.efficiency * passband
    qb = 0.5 * eta_s * det_b.efficiency * passband

    actions = channel_actions(grid, ff)
    side = actions != NO_SHIFT
    trig_khz = float(side_click_probabilities(mu, route, herald_dark)[side].sum() / bin_s / 1e3)
    herald_channels = np.ones(m_count, bool) if arrangement.multiplexed else np.arange(m_count) == tnf_mode
    return BinPlan(
        mu=mu,
        mu_bg=mu_bg,
        route=route,
        herald_dark=herald_dark,
        qa=qa,
        qb=qb,
        dark_a=det_a.dark_probability(bin_s),
        dark_b=det_b.dark_probability(bin_s),
        actions=actions,
        shift_enabled=arrangement.multiplexed,
        survival=float(trigger_survival_probability(trig_khz, ff)),
        shift_efficiency=ff.shift_efficiency,
        herald_channels=herald_channels,
        bin_rate=1.0 / bin_s,
        trigger_rate_khz=trig_khz,
    )


# ---------------------------------------------------------------------------
# Click-level simulation


@dataclass
class ClickRecord:
    """Detector time tags of one run; only bins with a click are kept."""

    n_bins: int
    bin_rate: float
    bins: np.ndarray
    herald_mask: np.ndarray
    a: np.ndarray
    b: np.ndarray
    herald_bits: int
    counters: dict

    @property
    def duration_s(self) -> float:
        return self.n_bins / self.bin_rate

    def channel_stream(self, k: int) -> ClickStream:
        return ClickStream(f"f_i{k + 1}", self.bins[(self.herald_mask >> k) & 1 == 1])

    def herald_stream(self) -> ClickStream:
        return ClickStream("herald", self.bins[(self.herald_mask & self.herald_bits) != 0])

    def a_stream(self) -> ClickStream:
        return ClickStream("A", self.bins[self.a])

    def b_stream(self) -> ClickStream:
        return ClickStream("B", self.bins[self.b])

    def signal_stream(self) -> ClickStream:
        return ClickStream("signal", self.bins[self.a | self.b])

    def g2_curve(self, taus) -> G2Curve:
        h, a, b = self.herald_stream(), self.a_stream(), self.b_stream()
        taus = np.asarray(taus, dtype=np.int64)
        c_abh = [triple_coincidences(h, a, b, int(t)) for t in taus]
        c_ah = [coincidence_count(h, a, int(t)) for t in taus]
        return g2_heralded(c_abh, c_ah, coincidence_count(h, b), len(h), taus)

    def metrics(self, accidental_delays=DEFAULT_ACCIDENTAL_DELAYS, window: int = 1) -> MetricsReport:
        h, s = self.herald_stream(), self.signal_stream()
        a, b = self.a_stream(), self.b_stream()
        t = self.duration_s
        c = coincidence_count(h, s, 0, window)
        car_res = car(s, h, 0, accidental_delays, window)
        c_bh = coincidence_count(h, b, 0, window)
        if len(h) and c_bh:
            g2 = g2_heralded(triple_coincidences(h, a, b), coincidence_count(h, a, 0, window), c_bh, len(h))
            g2v, g2e = float(g2.g2[0]), float(g2.err[0])
        else:
            g2v = g2e = math.nan
        return MetricsReport(
            hsp_rate=c / t / 1e3,
            hsp_rate_err=math.sqrt(c) / t / 1e3,
            car=car_res.value,
            car_err=car_res.error,
            g2_zero=g2v,
            g2_zero_err=g2e,
            heralding_efficiency=klyshko_efficiency(c, len(h)) if len(h) else math.nan,
            herald_rate=len(h) / t / 1e3,
            car_lower_bound=car_res.lower_bound,
            extra={"coincidences": c, "heralds": len(h), "bins": self.n_bins},
        )


def _capacity(plan: BinPlan, n_bins: int) -> int:
    lam = n_bins * float(plan.stream_probabilities().sum())
    return int(1.1 * lam + 8.0 * math.sqrt(lam) + 1024)


def _batch_seeds(seed: int, n_batches: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n_batches)]


def simulate(plan: BinPlan, n_bins: int, seed: int, batch_bins: int = 1 << 28, backend: str | None = None) -> ClickRecord:
    """Click-level Monte Carlo over ``n_bins`` bins in independently seeded batches."""
    if n_bins <= 0:
        raise ValueError("n_bins must be positive")
    n_batches = -(-int(n_bins) // int(batch_bins))
    x = plan.mu / (1.0 + plan.mu)
    with np.errstate(divide="ignore"):
        log_x = np.log(x)
    route_cum = np.cumsum(plan.route, axis=1)
    parts = []
    counters = np.zeros(4, np.int64)
    for i, s in enumerate(_batch_seeds(seed, n_batches)):
        start = i * batch_bins
        n = min(batch_bins, n_bins - start)
        cap = _capacity(plan, n)
        while True:
            out = kernels.simulate_clicks(
                n, s, plan.stream_probabilities(), log_x, plan.mu_bg, route_cum, plan.actions,
                plan.shift_enabled, plan.survival, plan.shift_efficiency, plan.qa, plan.qb, cap, backend,
            )
            if not out[5]:
                break
            cap *= 2
        bins, mask, a, b, cnt, _ = out
        parts.append((bins + start, mask, a, b))
        counters += cnt
    cat = [np.concatenate([p[j] for p in parts]) for j in range(4)]
    names = ("attempted", "survived", "applied", "conflicts")
    return ClickRecord(
        n_bins=int(n_bins),
        bin_rate=plan.bin_rate,
        bins=cat[0],
        herald_mask=cat[1],
        a=cat[2].astype(bool),
        b=cat[3].astype(bool),
        herald_bits=plan.herald_bits,
        counters={k: int(v) for k, v in zip(names, counters)},
    )


# ---------------------------------------------------------------------------
# Per-bin probabilities


# Stands in for log(0) so that 0 * log(0) evaluates to 0 in matrix products.
_LOG_FLOOR = -1e300

MOMENT_NAMES = ("H", "HA", "HB", "HAB", "A", "B", "AB")


@dataclass
class BinMoments:
    """Per-bin probabilities of herald (H) and signal-detector events.

    ``cov`` is the covariance of the estimate (zero for exact evaluations).
    """

    values: np.ndarray
    cov: np.ndarray
    bin_rate: float
    samples: int = 0

    def __getitem__(self, name: str) -> float:
        return float(self.values[MOMENT_NAMES.index(name)])

    def _err(self, grad) -> float:
        g = np.asarray(grad, dtype=float)
        return float(math.sqrt(max(0.0, g @ self.cov @ g)))

    @property
    def hs(self) -> float:
        return self["HA"] + self["HB"] - self["HAB"]

    @property
    def s(self) -> float:
        return self["A"] + self["B"] - self["AB"]

    def rate_khz(self) -> tuple[float, float]:
        k = self.bin_rate / 1e3
        return self.hs * k, self._err(np.array([0, 1, 1, -1, 0, 0, 0]) * k)

    def herald_rate_khz(self) -> float:
        return self["H"] * self.bin_rate / 1e3

    def g2(self) -> tuple[float, float]:
        h, ha, hb, hab = self["H"], self["HA"], self["HB"], self["HAB"]
        v = hab * h / (ha * hb)
        return v, self._err(v * np.array([1 / h, -1 / ha, -1 / hb, 1 / hab if hab > 0 else 0.0, 0, 0, 0]))

    def car(self) -> tuple[float, float]:
        hs, s, h = self.hs, self.s, self["H"]
        v = hs / (h * s)
        grad = np.array([-1 / h, 1 / hs, 1 / hs, -1 / hs, -1 / s, -1 / s, 1 / s]) * v
        return v, self._err(grad)

    def klyshko_signal(self) -> float:
        return self.hs / self["H"]

    def klyshko_herald(self) -> float:
        return self.hs / self.s

    def report(self) -> MetricsReport:
        r, re = self.rate_khz()
        c, ce = self.car()
        g, ge = self.g2()
        return MetricsReport(r, re, c, ce, g, ge, self.klyshko_signal(), self.herald_rate_khz())


def _groups(plan: BinPlan):
    """Merge channels sharing (herald membership, action) into click groups."""
    keys = sorted({(bool(h), int(a)) for h, a in zip(plan.herald_channels, plan.actions)})
    member = np.array([[(bool(h), int(a)) == key for h, a in zip(plan.herald_channels, plan.actions)] for key in keys])
    r = plan.route @ member.T.astype(float)  # (mode, group)
    d = np.array([np.prod(1.0 - plan.herald_dark[row]) for row in member])  # no-dark probability
    return keys, r, d


def _state_table(plan: BinPlan, keys):
    g = len(keys)
    n_sets = 1 << g
    heralded = np.zeros(n_sets, bool)
    sp = np.zeros((n_sets, N_STATES))
    for c in range(n_sets):
        inside = [keys[j] for j in range(g) if (c >> j) & 1]
        heralded[c] = any(h for h, _ in inside)
        sp[c] = plan.state_probabilities(any(a == SHIFT_DOWN for _, a in inside), any(a == SHIFT_UP for _, a in inside))
    return heralded, sp


def _mobius(g: int) -> np.ndarray:
    """M[C, T] = (-1)^{|C\\T|} for T subset of C."""
    n = 1 << g
    m = np.zeros((n, n))
    for c in range(n):
        t = c
        while True:
            m[c, t] = (-1) ** bin(c & ~t).count("1")
            if t == 0:
                break
            t = (t - 1) & c
    return m


def conditional_moments(plan: BinPlan, n: np.ndarray) -> np.ndarray:
    """Per-bin event probabilities given the thermal pair numbers ``n`` (rows)."""
    keys, r, d = _groups(plan)
    g = len(keys)
    heralded, sp = _state_table(plan, keys)
    n = np.asarray(n, dtype=float)
    # Q(T) = P(no click outside T)
    sets = np.arange(1 << g)
    outside = ((sets[:, None] >> np.arange(g)) & 1) == 0  # (set, group)
    with np.errstate(divide="ignore"):
        log_keep = np.maximum(np.log1p(-(r @ outside.T)), _LOG_FLOOR)  # (mode, set)
    log_q = n @ log_keep + np.log(d) @ outside.T
    q = np.exp(log_q)
    p_c = q @ _mobius(g).T  # exact click-group set probabilities
    p_c = np.clip(p_c, 0.0, None)
    p_state = p_c @ sp
    p_hstate = (p_c * heralded) @ sp

    def log_none(qm, dark):
        with np.errstate(divide="ignore"):
            per_photon = np.maximum(np.log1p(-qm), _LOG_FLOOR)  # (state, mode)
        return n @ per_photon.T - (plan.mu_bg * qm).sum(axis=1) + sum(math.log1p(-x) for x in dark)

    la = log_none(plan.qa, [plan.dark_a])
    lb = log_none(plan.qb, [plan.dark_b])
    lab = log_none(plan.qa + plan.qb, [plan.dark_a, plan.dark_b])
    pa, pb = -np.expm1(la), -np.expm1(lb)
    pab = pa + pb + np.expm1(lab)
    out = np.stack(
        [
            p_hstate.sum(axis=1),
            (p_hstate * pa).sum(axis=1),
            (p_hstate * pb).sum(axis=1),
            (p_hstate * pab).sum(axis=1),
            (p_state * pa).sum(axis=1),
            (p_state * pb).sum(axis=1),
            (p_state * pab).sum(axis=1),
        ],
        axis=1,
    )
    return out


def estimate_moments(
    plan: BinPlan,
    n_samples: int = 1 << 21,
    seed: int = 0,
    n_batches: int = 32,
    tilt_mu: float = 0.5,
) -> BinMoments:
    """Importance-sampled per-bin probabilities.

    Pair numbers are drawn from a thermal law with mean ``max(mu, tilt_mu)`` so
    that multi-pair bins are common, and reweighted by the likelihood ratio.
    Everything downstream of the pair numbers is integrated in closed form.
    """
    mu = plan.mu
    mu_t = np.maximum(mu, tilt_mu)
    x, x_t = mu / (1.0 + mu), mu_t / (1.0 + mu_t)
    with np.errstate(divide="ignore"):
        log_ratio = np.where(mu > 0, np.log(x) - np.log(x_t), -np.inf)
    log_norm = np.log1p(mu_t) - np.log1p(mu)
    per = max(1, n_samples // n_batches)
    means = np.empty((n_batches, len(MOMENT_NAMES)))
    for i, s in enumerate(_batch_seeds(seed, n_batches)):
        rng = np.random.default_rng(s)
        n = rng.geometric(1.0 / (1.0 + mu_t), size=(per, mu.size)) - 1
        with np.errstate(invalid="ignore"):
            lw = np.where(n > 0, n * log_ratio, 0.0) + log_norm
        w = np.exp(lw.sum(axis=1))
        means[i] = (conditional_moments(plan, n) * w[:, None]).mean(axis=0)
    return BinMoments(
        values=means.mean(axis=0),
        cov=np.cov(means, rowvar=False) / n_batches,
        bin_rate=plan.bin_rate,
        samples=per * n_batches,
    )
