"""Root finding on the enumeration oracle: gain calibration and matched-rate set points."""
from __future__ import annotations

import math

from scipy.optimize import brentq

from .oracle import enumerate_moments
from .simulator import Arrangement, SystemModel, build_plan

CALIBRATION_POWER_MW = 16.98
CALIBRATION_RATE_KHZ = 23.6


def expected_rate_khz(model: SystemModel, arrangement: Arrangement, n_max: int = 6) -> float:
    return enumerate_moments(build_plan(model, arrangement), n_max=n_max).rate_khz()[0]


def calibrate_gain(
    model: SystemModel,
    power_mw: float = CALIBRATION_POWER_MW,
    target_khz: float = CALIBRATION_RATE_KHZ,
    arrangement: Arrangement | None = None,
) -> float:
    """Gain coefficient putting the expected multiplexed rate at ``target_khz``."""
    arrangement = arrangement or Arrangement.mux()
    base = model.with_power(power_mw)

    def miss(log_gain):
        return expected_rate_khz(base.with_gain(math.exp(log_gain)), arrangement) - target_khz

    return math.exp(brentq(miss, math.log(1e-9), math.log(1e-3), xtol=1e-10))


def power_for_rate(model: SystemModel, arrangement: Arrangement, target_khz: float, p_max: float = 200.0) -> float:
    """Pump power (mW) whose expected heralded rate equals ``target_khz``."""

    def miss(log_p):
        return expected_rate_khz(model.with_power(math.exp(log_p)), arrangement) - target_khz

    return math.exp(brentq(miss, math.log(1e-3), math.log(p_max), xtol=1e-10))
