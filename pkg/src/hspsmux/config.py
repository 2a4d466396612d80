"""Experiment configuration: dataclasses, YAML round trip and the shipped presets."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import yaml

from .detection import BANDWIDTH_MISMATCH_RATIO, DetectorConfig
from .feedforward import FeedForwardConfig
from .hom import HomConfig
from .losses import LossBudget
from .simulator import SystemModel, default_detectors
from .source import CwBinned, Pulsed, SourceConfig
from .spectral import HERALD_FWHM_GHZ, TNF_FWHM_GHZ, JsiSweepConfig, ModeGrid

SCENARIOS = ("rate_vs_power", "car_vs_rate", "g2_vs_rate", "jsi_map", "hom_scan", "loss_budget")
PRESETS = ("paper2021",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    losses: LossBudget = field(default_factory=LossBudget)
    herald_fwhm: float = HERALD_FWHM_GHZ
    output_filter_fwhm: float = TNF_FWHM_GHZ
    herald_capture: float = BANDWIDTH_MISMATCH_RATIO
    background: bool = True


@dataclass(frozen=True)
class SweepConfig:
    pump_powers: tuple[float, ...] = (2.0, 3.0, 4.0, 6.0, 8.0, 11.0, 14.0, 16.98)
    low_power_max: float = 4.0  # mW; points used for the enhancement factor
    target_coincidences: int = 4000
    min_bins: int = 10_000_000
    target_rates_khz: tuple[float, ...] = (1.0, 2.0, 3.1, 5.0, 10.0, 15.0, 21.2)
    is_samples: int = 1 << 21
    purity_is_samples: int = 1 << 23  # reference point of the purity ratio
    g2_tau_rate_khz: float = 21.2
    g2_tau_max: int = 40  # bins
    g2_acquisition_s: float = 3600.0
    accidental_offset: int = 20  # bins beyond the peak
    accidental_span: int = 2000  # delays per side
    klyshko_power: float = 4.0
    hom_g2_source: str = "config"  # or "simulated"
    hom_rate_khz: float = 21.2

    def __post_init__(self):
        object.__setattr__(self, "pump_powers", tuple(float(p) for p in self.pump_powers))
        object.__setattr__(self, "target_rates_khz", tuple(float(r) for r in self.target_rates_khz))
        if any(p < 0 for p in self.pump_powers):
            raise ConfigError("pump powers must be >= 0")
        if self.hom_g2_source not in ("config", "simulated"):
            raise ConfigError("hom_g2_source must be 'config' or 'simulated'")

    def accidental_delays(self) -> tuple[int, ...]:
        lo, n = self.accidental_offset, self.accidental_span
        return tuple(range(-lo - n + 1, -lo + 1)) + tuple(range(lo, lo + n))


@dataclass(frozen=True)
class ExperimentConfig:
    run_id: str = "run"
    seed: int = 0
    scenario: str = "rate_vs_power"
    source: SourceConfig = field(default_factory=SourceConfig)
    feedforward: FeedForwardConfig = field(default_factory=FeedForwardConfig)
    detectors: tuple[DetectorConfig, ...] = field(default_factory=default_detectors)
    filters: FilterConfig = field(default_factory=FilterConfig)
    acquisition_bins: int = 200_000_000_000  # cap per sweep point
    sweep: SweepConfig = field(default_factory=SweepConfig)
    hom: HomConfig = field(default_factory=HomConfig)
    jsi: JsiSweepConfig = field(default_factory=JsiSweepConfig)

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.acquisition_bins <= 0:
            raise ConfigError("acquisition_bins must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not self.run_id or "/" in self.run_id or self.run_id in (".", ".."):
            raise ConfigError("run_id must be a plain directory name")

    def system_model(self) -> SystemModel:
        f = self.filters
        return SystemModel(
            source=self.source,
            feedforward=self.feedforward,
            losses=f.losses,
            detectors=self.detectors,
            grid=ModeGrid(self.source.mode_count),
            output_filter_fwhm=f.output_filter_fwhm,
            herald_fwhm=f.herald_fwhm,
            herald_capture=f.herald_capture,
            background=f.background,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# dict <-> dataclass


def _plain(value):
    if isinstance(value, float):
        return float(value)
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _flat(obj) -> dict:
    return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def to_dict(cfg: ExperimentConfig) -> dict:
    pump = cfg.source.pump_mode
    source = _flat(cfg.source)
    source["pump_mode"] = {"kind": pump.kind, **_flat(pump)}
    jsi = _flat(cfg.jsi)
    grid = jsi.pop("grid")
    jsi["mode_count"] = grid.mode_count
    jsi["spacing_ghz"] = grid.spacing_ghz
    hom = _flat(cfg.hom)
    return {
        "run_id": cfg.run_id,
        "seed": int(cfg.seed),
        "scenario": cfg.scenario,
        "acquisition_bins": int(cfg.acquisition_bins),
        "source": source,
        "feedforward": _flat(cfg.feedforward),
        "detectors": [_flat(d) for d in cfg.detectors],
        "filters": {**_flat(cfg.filters), "losses": _flat(cfg.filters.losses)},
        "sweep": _flat(cfg.sweep),
        "hom": hom,
        "jsi": jsi,
    }


def _build(cls, data: dict | None, where: str, **fixed):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    for key, value in data.items():
        if isinstance(value, list):
            data[key] = tuple(value)
    data.update(fixed)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data: dict[str, Any]) -> ExperimentConfig:
    data = dict(data)
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    src = dict(data.get("source") or {})
    pump = dict(src.pop("pump_mode", None) or {"kind": "cw_binned"})
    kind = pump.pop("kind", "cw_binned")
    if kind == "cw_binned":
        pump_mode = _build(CwBinned, pump, "source.pump_mode")
    elif kind == "pulsed":
        pump_mode = _build(Pulsed, pump, "source.pump_mode")
    else:
        raise ConfigError(f"unknown pump_mode kind {kind!r}")
    source = _build(SourceConfig, src, "source", pump_mode=pump_mode)

    filt = dict(data.get("filters") or {})
    losses = _build(LossBudget, filt.pop("losses", None), "filters.losses")
    filters = _build(FilterConfig, filt, "filters", losses=losses)

    jsi = dict(data.get("jsi") or {})
    grid = ModeGrid(int(jsi.pop("mode_count", 3)), float(jsi.pop("spacing_ghz", 12.5)))
    jsi_cfg = _build(JsiSweepConfig, jsi, "jsi", grid=grid)

    dets = data.get("detectors")
    detectors = (
        default_detectors(source.mode_count)
        if dets is None
        else tuple(_build(DetectorConfig, d, f"detectors[{i}]") for i, d in enumerate(dets))
    )
    top = {k: data[k] for k in ("run_id", "seed", "scenario", "acquisition_bins") if k in data}
    try:
        return ExperimentConfig(
            **top,
            source=source,
            feedforward=_build(FeedForwardConfig, data.get("feedforward"), "feedforward"),
            detectors=detectors,
            filters=filters,
            sweep=_build(SweepConfig, data.get("sweep"), "sweep"),
            hom=_build(HomConfig, data.get("hom"), "hom"),
            jsi=jsi_cfg,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None, width=100)


def parse_yaml(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return from_dict(data)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_yaml(fh.read())


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {PRESETS}")
    text = resources.files("hspsmux").joinpath("presets").joinpath(f"{name}.yaml").read_text(encoding="utf-8")
    return parse_yaml(text)
