import math

import numpy as np
import pytest

from hspsmux.config import load_preset
from hspsmux.simulator import BinPlan


@pytest.fixture(scope="session")
def preset():
    return load_preset("paper2021")


@pytest.fixture(scope="session")
def model(preset):
    return preset.system_model()


def single_mode_plan(mu, eta_h=0.9, qa=0.45, qb=0.45, dark_h=0.0, dark_a=0.0, dark_b=0.0, mu_bg=0.0):
    """One mode, one heralding channel, no feed-forward."""
    return BinPlan(
        mu=np.array([mu]),
        mu_bg=np.array([mu_bg]),
        route=np.array([[eta_h]]),
        herald_dark=np.array([dark_h]),
        qa=np.full((3, 1), qa),
        qb=np.full((3, 1), qb),
        dark_a=dark_a,
        dark_b=dark_b,
        actions=np.zeros(1, np.int64),
        shift_enabled=False,
        survival=1.0,
        shift_efficiency=1.0,
        herald_channels=np.ones(1, bool),
        bin_rate=6.5e9,
    )


def closed_form_moments(mu, eta_h, qa, qb, dark_h=0.0, dark_a=0.0, dark_b=0.0, mu_bg=0.0) -> dict:
    """Joint click probabilities for one thermal mode via generating functions.

    P(no click in detector set S) = prod(1 - dark) * E[y^n] * E[z^N] with the
    thermal E[y^n] = 1 / (1 + mu (1 - y)) and Poisson E[z^N] = exp(-mu_bg (1 - z));
    inclusion-exclusion turns the no-click probabilities into joint clicks.
    """
    dark = {"H": dark_h, "A": dark_a, "B": dark_b}

    def none(s: str) -> float:
        z = 1.0 - (qa if "A" in s else 0.0) - (qb if "B" in s else 0.0)
        y = (1.0 - eta_h if "H" in s else 1.0) * z
        out = 1.0 / (1.0 + mu * (1.0 - y)) * math.exp(-mu_bg * (1.0 - z))
        for d in s:
            out *= 1.0 - dark[d]
        return out

    def all_click(s: str) -> float:
        total = 0.0
        for mask in range(1 << len(s)):
            sub = "".join(c for i, c in enumerate(s) if mask >> i & 1)
            total += (-1) ** len(sub) * none(sub)
        return total

    return {k: all_click(k) for k in ("H", "HA", "HB", "HAB", "A", "B", "AB")}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
