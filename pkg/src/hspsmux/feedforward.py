"""Feed-forward frequency shifting of the heralded signal photon."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import ModeGrid

NO_SHIFT, SHIFT_DOWN, SHIFT_UP = 0, 1, 2


@dataclass(frozen=True)
class FeedForwardConfig:
    v_pi: float = 1.4  # V
    ramp_up: float = 3.5e10  # V/s, rising edge
    ramp_down: float = -3.5e10  # V/s, falling edge
    shift_efficiency: float = 0.90
    awg_f3db: float = 1.2  # MHz; inf disables trigger loss
    butterworth_order: int = 2
    compensation_delay: float = 0.0  # ns, applied to f_i1 triggers

    def __post_init__(self):
        if not self.v_pi > 0:
            raise ValueError("v_pi must be positive")
        if not 0.0 <= self.shift_efficiency <= 1.0:
            raise ValueError("shift_efficiency must lie in [0, 1]")
        if not self.awg_f3db > 0:
            raise ValueError("awg_f3db must be positive")
        if self.butterworth_order < 1:
            raise ValueError("butterworth_order must be >= 1")

    @property
    def up_shift_ghz(self) -> float:
        return frequency_shift_magnitude(self.ramp_up, self.v_pi)

    @property
    def down_shift_ghz(self) -> float:
        return frequency_shift_magnitude(self.ramp_down, self.v_pi)


@dataclass(frozen=True)
class ShiftOutcome:
    attempted: bool
    trigger_survived: bool
    shift_applied: bool
    resulting_frequency: float  # THz; nan when no photon

    def __post_init__(self):
        if self.shift_applied and not (self.trigger_survived and self.attempted):
            raise ValueError("a shift can only be applied after a surviving trigger")


def frequency_shift_magnitude(kappa: float, v_pi: float) -> float:
    """Serrodyne shift kappa / (2 V_pi) in GHz; sign follows the ramp slope."""
    if not v_pi > 0:
        raise ValueError("v_pi must be positive")
    return kappa / (2.0 * v_pi) / 1e9


def trigger_survival_probability(heralding_rate_khz, config: FeedForwardConfig):
    """Butterworth low-pass magnitude at the trigger rate."""
    rate = np.asarray(heralding_rate_khz, dtype=float)
    if np.any(rate < 0):
        raise ValueError("heralding rate must be >= 0")
    r = rate / 1e3 / config.awg_f3db
    out = 1.0 / np.sqrt(1.0 + r ** (2 * config.butterworth_order))
    return float(out) if out.ndim == 0 else out


def channel_actions(grid: ModeGrid, config: FeedForwardConfig) -> np.ndarray:
    """Shift action per heralding channel.

    Channels whose signal twin sits one spacing above the central mode drive a
    falling-edge (down) shift, one spacing below a rising-edge (up) shift.
    Farther channels cannot be reached with a single ramp and are left alone.
    """
    actions = np.zeros(grid.mode_count, dtype=np.int64)
    for k in range(grid.mode_count):
        steps = round(grid.signal_offset_ghz(k) / grid.spacing_ghz)
        if steps == 1:
            actions[k] = SHIFT_DOWN
        elif steps == -1:
            actions[k] = SHIFT_UP
    return actions


def apply_feedforward(
    herald_clicks,
    signal_modes,
    config: FeedForwardConfig,
    rng: np.random.Generator,
    *,
    trigger_rate_khz: float = 0.0,
    grid: ModeGrid | None = None,
) -> list[ShiftOutcome]:
    """Bin-by-bin reference state machine.

    ``herald_clicks`` is (n_bins, mode_count) bool; ``signal_modes`` gives the
    spectral mode of the signal photon in each bin, -1 for none.  Triggers from
    channels that require a shift attempt it; both directions in one bin cancel.
    ``compensation_delay`` only re-times f_i1 triggers; the signal delay loop is
    taken to match it, so triggers act on their own bin.
    """
    grid = grid or ModeGrid()
    clicks = np.asarray(herald_clicks, dtype=bool)
    modes = np.asarray(signal_modes, dtype=np.int64)
    if clicks.ndim != 2 or clicks.shape[0] != modes.shape[0]:
        raise ValueError("herald clicks and signal photons must share the bin timeline")
    if clicks.shape[1] != grid.mode_count:
        raise ValueError("one herald column per spectral mode is required")

    actions = channel_actions(grid, config)
    survival = trigger_survival_probability(trigger_rate_khz, config)
    shift_ghz = {SHIFT_DOWN: config.down_shift_ghz, SHIFT_UP: config.up_shift_ghz}
    out = []
    for row, m in zip(clicks, modes):
        fired = {int(actions[k]) for k in np.flatnonzero(row) if actions[k] != NO_SHIFT}
        freq = grid.signal_frequency(int(m)) if m >= 0 else math.nan
        if len(fired) != 1:
            out.append(ShiftOutcome(False, False, False, freq))
            continue
        action = fired.pop()
        survived = bool(rng.random() < survival)
        applied = survived and bool(rng.random() < config.shift_efficiency)
        if applied and m >= 0:
            freq = freq + shift_ghz[action] / 1e3
        out.append(ShiftOutcome(True, survived, applied, freq))
    return out
