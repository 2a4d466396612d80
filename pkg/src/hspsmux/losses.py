"""Component loss chains of the signal and heralding arms."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .spectral import HERALD_CHANNEL_LOSS_DB, HERALD_EXCESS_LOSS_DB, db_to_transmission

SIGNAL_SNSPD_LOSS_DB = 2.20
HERALD_SNSPD_LOSS_DB = 1.80


@dataclass(frozen=True)
class LossBudget:
    """Optical insertion losses in dB; detector losses live on the detectors."""

    ppln_coupling: float = 2.50
    dwdm_signal: float = 1.83
    dwdm_herald: float = 2.21
    narrowband: tuple[float, ...] = HERALD_CHANNEL_LOSS_DB
    narrowband_excess: tuple[float, ...] = HERALD_EXCESS_LOSS_DB
    delay_fiber: float = 0.40
    eom: float = 4.56
    tnf: float = 5.30

    def __post_init__(self):
        object.__setattr__(self, "narrowband", tuple(float(x) for x in self.narrowband))
        object.__setattr__(self, "narrowband_excess", tuple(float(x) for x in self.narrowband_excess))
        if len(self.narrowband) != len(self.narrowband_excess):
            raise ValueError("narrowband and narrowband_excess need one entry per channel")
        scalars = (self.ppln_coupling, self.dwdm_signal, self.dwdm_herald, self.delay_fiber, self.eom, self.tnf)
        if any(x < 0 for x in scalars + self.narrowband + self.narrowband_excess):
            raise ValueError("losses must be non-negative")

    @classmethod
    def lossless(cls, channels: int = 3) -> "LossBudget":
        return cls(0.0, 0.0, 0.0, (0.0,) * channels, (0.0,) * channels, 0.0, 0.0, 0.0)

    @property
    def channel_count(self) -> int:
        return len(self.narrowband)

    def signal_chain(self) -> list[tuple[str, float]]:
        return [
            ("ppln_coupling", self.ppln_coupling),
            ("dwdm_signal", self.dwdm_signal),
            ("delay_fiber", self.delay_fiber),
            ("eom", self.eom),
            ("tnf", self.tnf),
        ]

    def herald_chain(self, channel: int, include_excess: bool = True) -> list[tuple[str, float]]:
        chain = [
            ("ppln_coupling", self.ppln_coupling),
            ("dwdm_herald", self.dwdm_herald),
            (f"narrowband_{channel}", self.narrowband[channel]),
        ]
        if include_excess and self.narrowband_excess[channel]:
            chain.append((f"narrowband_excess_{channel}", self.narrowband_excess[channel]))
        return chain

    def signal_loss_db(self) -> float:
        return math.fsum(db for _, db in self.signal_chain())

    def herald_loss_db(self, channel: int, include_excess: bool = True) -> float:
        return math.fsum(db for _, db in self.herald_chain(channel, include_excess))

    def signal_transmission(self) -> float:
        return float(db_to_transmission(self.signal_loss_db()))

    def herald_transmission(self, channel: int, include_excess: bool = True) -> float:
        return float(db_to_transmission(self.herald_loss_db(channel, include_excess)))


def transmission_with_detector(optical_db: float, detector_efficiency: float) -> float:
    return float(db_to_transmission(optical_db)) * detector_efficiency


def efficiency_to_db(eta: float) -> float:
    if not 0 < eta <= 1:
        raise ValueError("efficiency must lie in (0, 1]")
    return -10.0 * math.log10(eta)
