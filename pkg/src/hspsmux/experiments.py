"""Scenario runners: each turns an ExperimentConfig into a RunResult."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import hom as hom_mod
from .calibration import power_for_rate
from .config import ExperimentConfig, SCENARIOS, dump_yaml
from .detection import g2_heralded
from .losses import efficiency_to_db
from .oracle import enumerate_moments
from .simulator import Arrangement, BinMoments, SystemModel, build_plan, estimate_moments, simulate
from .spectral import jsi_sweep

CAR_REFERENCE_RATE_KHZ = 4.0
PURITY_REFERENCE_RATE_KHZ = 3.1
LOW_RATE_MAX_KHZ = 4.5


@dataclass
class RunResult:
    scenario: str
    config: ExperimentConfig
    columns: tuple[str, ...]
    rows: list[tuple]
    summary: dict
    extra_files: dict[str, str] = field(default_factory=dict)
    bins_simulated: int = 0
    wall_clock_s: float = 0.0  # reported on the console only, never written
    embed_points: bool = True  # False for grids already written as CSV

    def csv_text(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def points(self) -> list[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]

    def metrics(self) -> dict:
        return {
            "run_id": self.config.run_id,
            "scenario": self.scenario,
            "seed": int(self.config.seed),
            "summary": _jsonable(self.summary),
            "points": _jsonable(self.points()) if self.embed_points else [],
            "throughput": {"bins_simulated": int(self.bins_simulated), "sweep_points": len(self.rows)},
        }

    def config_echo(self) -> str:
        return dump_yaml(self.config)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else float(f"{v:.6g}")
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def point_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, np.uint64)[0])


def arrangements(model: SystemModel) -> list[tuple[str, Arrangement]]:
    out = [("multiplexed", Arrangement.mux())]
    out += [(model.grid.signal_label(k), Arrangement.single(k)) for k in range(model.grid.mode_count)]
    return out


def _bins_for(cfg: ExperimentConfig, expected: BinMoments) -> int:
    p = expected.hs
    want = cfg.sweep.target_coincidences / p if p > 0 else cfg.acquisition_bins
    return int(min(cfg.acquisition_bins, max(cfg.sweep.min_bins, math.ceil(want))))


def _ratio(num, num_err, den, den_err):
    r = num / den
    return r, abs(r) * math.hypot(num_err / num if num else 0.0, den_err / den if den else 0.0)


def _weighted_mean(values, errors):
    v, e = np.asarray(values, float), np.asarray(errors, float)
    if v.size == 0:
        return math.nan, math.nan
    w = 1.0 / np.maximum(e, 1e-300) ** 2
    return float((w * v).sum() / w.sum()), float(1.0 / math.sqrt(w.sum()))


# ---------------------------------------------------------------------------
# Monte-Carlo power sweep shared by the rate and CAR scenarios


def _power_sweep(cfg: ExperimentConfig):
    if not cfg.sweep.pump_powers:
        raise ValueError("empty pump-power sweep")
    base = cfg.system_model()
    delays = cfg.sweep.accidental_delays()
    points, total_bins = [], 0
    for i, power in enumerate(cfg.sweep.pump_powers):
        model = base.with_power(power)
        for j, (label, arr) in enumerate(arrangements(model)):
            plan = build_plan(model, arr)
            expected = enumerate_moments(plan, n_max=6)
            n_bins = _bins_for(cfg, expected)
            rec = simulate(plan, n_bins, point_seed(cfg.seed, i, j))
            total_bins += n_bins
            points.append(
                {
                    "pump_mw": power,
                    "arrangement": label,
                    "bins": n_bins,
                    "report": rec.metrics(delays),
                    "expected": expected,
                    "plan": plan,
                    "counters": rec.counters,
                }
            )
    return points, total_bins


def _enhancement(points, low_power_max):
    by_power: dict[float, dict] = {}
    for p in points:
        by_power.setdefault(p["pump_mw"], {})[p["arrangement"]] = p
    per_power, low, low_fs0 = [], [], []
    for power, group in sorted(by_power.items()):
        mux = group["multiplexed"]["report"]
        singles = [g["report"] for k, g in group.items() if k != "multiplexed"]
        mean = float(np.mean([s.hsp_rate for s in singles]))
        mean_err = math.sqrt(sum(s.hsp_rate_err**2 for s in singles)) / len(singles)
        e, ee = _ratio(mux.hsp_rate, mux.hsp_rate_err, mean, mean_err)
        fs0 = group["f_s0"]["report"]
        e0, ee0 = _ratio(mux.hsp_rate, mux.hsp_rate_err, fs0.hsp_rate, fs0.hsp_rate_err)
        exp_mux = group["multiplexed"]["expected"].rate_khz()[0]
        exp_mean = float(np.mean([g["expected"].rate_khz()[0] for k, g in group.items() if k != "multiplexed"]))
        per_power.append(
            {
                "pump_mw": power,
                "enhancement": e,
                "enhancement_err": ee,
                "enhancement_vs_fs0": e0,
                "enhancement_vs_fs0_err": ee0,
                "expected_enhancement": exp_mux / exp_mean,
                "survival": group["multiplexed"]["plan"].survival,
                "trigger_rate_khz": group["multiplexed"]["plan"].trigger_rate_khz,
            }
        )
        if power <= low_power_max:
            low.append((e, ee))
            low_fs0.append((e0, ee0))
    le, lee = _weighted_mean(*zip(*low)) if low else (math.nan, math.nan)
    l0, l0e = _weighted_mean(*zip(*low_fs0)) if low_fs0 else (math.nan, math.nan)
    return per_power, {"low_power_enhancement": le, "low_power_enhancement_err": lee,
                       "low_power_enhancement_vs_fs0": l0, "low_power_enhancement_vs_fs0_err": l0e}


def run_rate_vs_power(cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    points, total = _power_sweep(cfg)
    cols = ("pump_mw", "arrangement", "bins", "coincidences", "hsp_rate_khz", "hsp_rate_err_khz",
            "herald_rate_khz", "expected_rate_khz", "heralding_efficiency", "survival", "trigger_rate_khz")
    rows = [
        (p["pump_mw"], p["arrangement"], p["bins"], p["report"].extra["coincidences"], p["report"].hsp_rate,
         p["report"].hsp_rate_err, p["report"].herald_rate, p["expected"].rate_khz()[0],
         p["report"].heralding_efficiency, p["plan"].survival, p["plan"].trigger_rate_khz)
        for p in points
    ]
    per_power, low = _enhancement(points, cfg.sweep.low_power_max)
    summary = {**low, "enhancement_by_power": per_power,
               "enhancement_definition": "multiplexed rate / mean single-mode rate"}
    return RunResult("rate_vs_power", cfg, cols, rows, summary, bins_simulated=total,
                     wall_clock_s=time.perf_counter() - t0)


def car_slope(rates, cars, car_errs) -> tuple[float, float]:
    """Weighted least-squares slope of log CAR against log rate."""
    x, y = np.log(rates), np.log(cars)
    sig = np.asarray(car_errs) / np.asarray(cars)
    coef, cov = np.polyfit(x, y, 1, w=1.0 / sig, cov="unscaled")
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


def interpolate_loglog(x, y, x0) -> float:
    order = np.argsort(x)
    return float(np.exp(np.interp(math.log(x0), np.log(np.asarray(x)[order]), np.log(np.asarray(y)[order]))))


def run_car_vs_rate(cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    points, total = _power_sweep(cfg)
    cols = ("pump_mw", "arrangement", "hsp_rate_khz", "hsp_rate_err_khz", "car", "car_err", "car_lower_bound",
            "expected_car")
    rows = [
        (p["pump_mw"], p["arrangement"], p["report"].hsp_rate, p["report"].hsp_rate_err, p["report"].car,
         p["report"].car_err, p["report"].car_lower_bound, p["expected"].car()[0])
        for p in points
    ]
    summary: dict = {}
    for label in [lab for lab, _ in arrangements(cfg.system_model())]:
        sel = [p for p in points if p["arrangement"] == label and not p["report"].car_lower_bound]
        rates = [p["report"].hsp_rate for p in sel]
        cars = [p["report"].car for p in sel]
        low = [p for p in sel if p["expected"].rate_khz()[0] <= LOW_RATE_MAX_KHZ]
        entry = {}
        if len(low) >= 2:
            s, se = car_slope([p["report"].hsp_rate for p in low], [p["report"].car for p in low],
                              [p["report"].car_err for p in low])
            es, _ = car_slope([p["expected"].rate_khz()[0] for p in low], [p["expected"].car()[0] for p in low],
                              [1.0] * len(low))
            entry.update(low_rate_slope=s, low_rate_slope_err=se, expected_low_rate_slope=es)
        if len(rates) >= 2 and min(rates) <= CAR_REFERENCE_RATE_KHZ <= max(rates):
            entry["car_at_4khz"] = interpolate_loglog(rates, cars, CAR_REFERENCE_RATE_KHZ)
        if sel:
            hi = max(sel, key=lambda p: p["report"].hsp_rate)
            entry.update(highest_rate_khz=hi["report"].hsp_rate, car_at_highest_rate=hi["report"].car)
        summary[label] = entry
    return RunResult("car_vs_rate", cfg, cols, rows, summary, bins_simulated=total,
                     wall_clock_s=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Purity


def g2_tau_histogram(moments: BinMoments, acquisition_s: float, tau_max: int, rng: np.random.Generator):
    """Counts entering the heralded g2(tau) estimator, with Poisson noise.

    Away from zero delay the A click belongs to an independent bin, so the
    expected three-fold count factorises as P(HB) P(A).
    """
    n = acquisition_s * moments.bin_rate
    taus = np.arange(-tau_max, tau_max + 1)
    zero = taus == 0
    exp_abh = np.where(zero, moments["HAB"], moments["HB"] * moments["A"]) * n
    exp_ah = np.where(zero, moments["HA"], moments["H"] * moments["A"]) * n
    c_abh = rng.poisson(exp_abh)
    c_ah = rng.poisson(exp_ah)
    c_bh = rng.poisson(moments["HB"] * n)
    h = rng.poisson(moments["H"] * n)
    return taus, c_abh, c_ah, g2_heralded(c_abh, c_ah, c_bh, h, taus)


def run_g2_vs_rate(cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    rates = cfg.sweep.target_rates_khz
    if not rates:
        raise ValueError("empty rate sweep")
    base = cfg.system_model()
    pairs = [("multiplexed", Arrangement.mux()), ("f_s0", Arrangement.single(base.grid.center_index))]
    cols = ("target_rate_khz", "arrangement", "pump_mw", "mu", "hsp_rate_khz", "hsp_rate_err_khz", "g2_zero",
            "g2_zero_err", "expected_g2_zero", "car")
    rows, est = [], {}
    ref = min(rates, key=lambda r: abs(r - PURITY_REFERENCE_RATE_KHZ))
    for i, rate in enumerate(rates):
        for j, (label, arr) in enumerate(pairs):
            power = power_for_rate(base, arr, rate)
            plan = build_plan(base.with_power(power), arr)
            n = cfg.sweep.purity_is_samples if rate == ref else cfg.sweep.is_samples
            m = estimate_moments(plan, n, point_seed(cfg.seed, i, j))
            exact = enumerate_moments(plan, n_max=6)
            est[(rate, label)] = (m, exact)
            r, re = m.rate_khz()
            g, ge = m.g2()
            rows.append((rate, label, power, float(plan.mu[0]), r, re, g, ge, exact.g2()[0], m.car()[0]))

    summary: dict = {}
    gm, gme = est[(ref, "multiplexed")][0].g2()
    gs, gse = est[(ref, "f_s0")][0].g2()
    ratio, ratio_err = _ratio(gm, gme, gs, gse)
    summary["purity_reference_rate_khz"] = ref
    summary["g2_multiplexed_at_reference"] = gm
    summary["g2_single_at_reference"] = gs
    summary["purity_ratio"] = ratio
    summary["purity_ratio_err"] = ratio_err
    summary["expected_purity_ratio"] = est[(ref, "multiplexed")][1].g2()[0] / est[(ref, "f_s0")][1].g2()[0]
    for label, _ in pairs:
        sel = [r for r in rows if r[1] == label]
        low = [r for r in sel if r[0] <= LOW_RATE_MAX_KHZ]
        if len(low) >= 2:
            summary[f"{label}_g2_per_khz"] = float(np.polyfit([r[4] for r in low], [r[6] for r in low], 1)[0])
            summary[f"{label}_expected_g2_per_khz"] = float(np.polyfit([r[4] for r in low], [r[8] for r in low], 1)[0])
        top = max(sel, key=lambda r: r[0])
        summary[f"{label}_g2_at_{top[0]:g}khz"] = top[6]

    # g2(tau) histogram at one operating point of the multiplexed source
    op_rate = cfg.sweep.g2_tau_rate_khz
    if (op_rate, "multiplexed") in est:
        m = est[(op_rate, "multiplexed")][0]
    else:
        arr = Arrangement.mux()
        m = estimate_moments(build_plan(base.with_power(power_for_rate(base, arr, op_rate)), arr),
                             cfg.sweep.is_samples, point_seed(cfg.seed, 999))
    rng = np.random.default_rng(point_seed(cfg.seed, 1000))
    taus, c_abh, c_ah, curve = g2_tau_histogram(m, cfg.sweep.g2_acquisition_s, cfg.sweep.g2_tau_max, rng)
    bin_ns = 1e9 / m.bin_rate
    lines = ["tau_bins,tau_ns,c_abh,c_ah,g2,g2_err"]
    for t, a, b, g, e in zip(taus, c_abh, c_ah, curve.g2, curve.err):
        lines.append(",".join([str(int(t)), _fmt(t * bin_ns), str(int(a)), str(int(b)), _fmt(g), _fmt(e)]))
    wings = curve.g2[np.abs(taus) >= 5]
    summary["g2_tau_operating_rate_khz"] = op_rate
    summary["g2_tau_zero"] = float(curve.g2[taus == 0][0])
    summary["g2_tau_wing_mean"] = float(np.nanmean(wings))
    return RunResult("g2_vs_rate", cfg, cols, rows, summary, {"g2_vs_rate_tau.csv": "\n".join(lines) + "\n"},
                     wall_clock_s=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Spectra, interference, losses


def run_jsi_map(cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    cols = ("scenario", "idler_thz", "signal_thz", "intensity")
    rows, extra, summary = [], {}, {}
    grid_ = cfg.jsi.grid
    for sc in ("A", "B", "C"):
        g = jsi_sweep(replace(cfg.jsi, scenario=sc))
        extra[f"jsi_map_{sc}.csv"] = g.to_csv()
        for i, fi in enumerate(g.idler_axis):
            for j, fs in enumerate(g.signal_axis):
                rows.append((sc, f"{fi:.7f}", f"{fs:.7f}", float(g.intensity[i, j])))
        marg = g.signal_marginal()
        peaks = [j for j in range(marg.size) if marg[j] > 0.05 * marg.max()
                 and (j == 0 or marg[j] > marg[j - 1]) and (j == marg.size - 1 or marg[j] >= marg[j + 1])]
        summary[sc] = {
            "islands": [[round(s, 7), round(i, 7)] for s, i in g.islands()],
            "signal_marginal_peaks_thz": [round(float(g.signal_axis[j]), 7) for j in peaks],
        }
        if sc == "A":
            summary[sc]["anti_diagonal_fwhm_ghz"] = g.anti_diagonal_fwhm()
    summary["mode_signal_thz"] = [round(grid_.signal_frequency(m), 7) for m in range(grid_.mode_count)]
    summary["mode_idler_thz"] = [round(grid_.idler_frequency(m), 7) for m in range(grid_.mode_count)]
    return RunResult("jsi_map", cfg, cols, rows, summary, extra, wall_clock_s=time.perf_counter() - t0,
                     embed_points=False)


def run_hom_scan(cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    hc = cfg.hom
    summary: dict = {}
    if cfg.sweep.hom_g2_source == "simulated":
        base = cfg.system_model()
        arr = Arrangement.mux()
        plan = build_plan(base.with_power(power_for_rate(base, arr, cfg.sweep.hom_rate_khz)), arr)
        g2 = estimate_moments(plan, cfg.sweep.is_samples, point_seed(cfg.seed, 7)).g2()[0]
        hc = replace(hc, g2_arm1=g2)
        summary["simulated_g2_arm1"] = g2
    dip = hom_mod.hom_dip_scan(hc, np.random.default_rng(point_seed(cfg.seed, 8)))
    n1, n2 = hc.n_bar_1, hc.n_bar_2
    overlap = hc.mode_overlap()
    summary.update(dip.summary())
    summary.update(
        {
            "g2_arm1": hc.g2_arm1,
            "bound_two_fold": hom_mod.visibility_two_fold(n1, n2) if n1 > 0 and n2 > 0 else math.nan,
            "bound_three_fold": hom_mod.visibility_three_fold(n1, n2) if n1 > 0 else math.nan,
            "corrected_bound_three_fold": overlap * hom_mod.visibility_three_fold(n1, n2) if n1 > 0 else math.nan,
            "gaussian_overlap_factor": hom_mod.bandwidth_correction(hc.pump_bandwidth, hc.herald_bandwidth,
                                                                     hc.output_filter_bandwidth),
            "external_bandwidth_ghz": hom_mod.external_bandwidth(hc.pump_bandwidth, hc.herald_bandwidth),
            "single_photon_replacement_visibility": hom_mod.single_photon_replacement_visibility(hc.g2_arm1, overlap),
            "purity_factor": hc.purity_factor,
            "purity_applied": hc.include_purity,
        }
    )
    return RunResult("hom_scan", cfg, dip.to_csv().splitlines()[0].split(","),
                     [tuple(r) for r in zip(dip.delays, dip.two_fold, dip.two_fold_err, dip.three_fold,
                                            dip.three_fold_err)],
                     summary, wall_clock_s=time.perf_counter() - t0)


def run_loss_budget(cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    model = cfg.system_model()
    lb = model.losses
    cols = ("arm", "item", "loss_db", "transmission")
    rows = []
    det_a = model.detector("A")
    sig_chain = lb.signal_chain() + [("snspd", efficiency_to_db(det_a.efficiency))]
    for name, db in sig_chain:
        rows.append(("signal", name, db, 10 ** (-db / 10)))
    sig_total = sum(db for _, db in sig_chain)
    rows.append(("signal", "total", sig_total, 10 ** (-sig_total / 10)))
    summary: dict = {"signal_transmission": 10 ** (-sig_total / 10)}
    for k in range(model.grid.mode_count):
        det = model.detector(f"f_i{k + 1}")
        chain = lb.herald_chain(k) + [("snspd", efficiency_to_db(det.efficiency))]
        arm = f"herald_{model.grid.idler_label(k)}"
        for name, db in chain:
            rows.append((arm, name, db, 10 ** (-db / 10)))
        total = sum(db for _, db in chain)
        rows.append((arm, "total", total, 10 ** (-total / 10)))
        summary[f"{arm}_transmission"] = 10 ** (-total / 10)

    power = cfg.sweep.klyshko_power
    pm = model.with_power(power)
    total_bins = 0
    klyshko = {}
    for k in range(model.grid.mode_count):
        arr = Arrangement.single(k)
        plan = build_plan(pm, arr)
        expected = enumerate_moments(plan, n_max=6)
        n_bins = _bins_for(cfg, expected)
        rec = simulate(plan, n_bins, point_seed(cfg.seed, 50, k))
        total_bins += n_bins
        h, s = rec.herald_stream(), rec.signal_stream()
        rep = rec.metrics(cfg.sweep.accidental_delays())
        c = rep.extra["coincidences"]
        label = model.grid.idler_label(k)
        klyshko[label] = {
            "signal_arm_collection": c / len(h) if len(h) else math.nan,
            "herald_arm_collection": c / len(s) if len(s) else math.nan,
            "expected_signal_arm_collection": expected.klyshko_signal(),
            "expected_herald_arm_collection": expected.klyshko_herald(),
            "coincidences": c,
        }
    summary["klyshko_power_mw"] = power
    summary["collection"] = klyshko
    summary["bandwidth_mismatch_ratio"] = model.herald_capture
    return RunResult("loss_budget", cfg, cols, rows, summary, bins_simulated=total_bins,
                     wall_clock_s=time.perf_counter() - t0)


RUNNERS = {
    "rate_vs_power": run_rate_vs_power,
    "car_vs_rate": run_car_vs_rate,
    "g2_vs_rate": run_g2_vs_rate,
    "jsi_map": run_jsi_map,
    "hom_scan": run_hom_scan,
    "loss_budget": run_loss_budget,
}
assert set(RUNNERS) == set(SCENARIOS)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.scenario](cfg)
