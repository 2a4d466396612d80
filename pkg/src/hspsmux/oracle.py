"""Brute-force per-bin probabilities by enumerating photon numbers.

Independent of the estimators in ``simulator``: thermal numbers are enumerated
up to ``n_max`` per mode, herald click sets are built photon by photon, and the
two signal detectors are tracked with a four-state (A hit, B hit) chain.  Only
the ``BinPlan`` description of the hardware is shared.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .simulator import BinMoments, BinPlan, N_STATES

# (A hit, B hit) states: 0 = none, 1 = A only, 2 = B only, 3 = both
_HIT_A = np.array([0.0, 1.0, 0.0, 1.0])
_HIT_B = np.array([0.0, 0.0, 1.0, 1.0])


def thermal_pmf(mu: float, n_max: int) -> np.ndarray:
    return np.array([mu**n / (1.0 + mu) ** (n + 1) for n in range(n_max + 1)])


def _photon_step(pa: float, pb: float) -> np.ndarray:
    """Transition of the hit state for one photon at the splitter + detectors."""
    t = np.zeros((4, 4))
    stay = 1.0 - pa - pb
    for s in range(4):
        t[s, s] += stay
        t[s, s | 1] += pa
        t[s, s | 2] += pb
    return t


def _herald_sets(route_row: np.ndarray, n: int, n_ch: int) -> np.ndarray:
    """Distribution over click bitmasks produced by ``n`` idler photons of one mode."""
    dist = np.zeros(1 << n_ch)
    dist[0] = 1.0
    lost = 1.0 - route_row.sum()
    for _ in range(n):
        new = dist * lost
        for k in range(n_ch):
            for c in range(1 << n_ch):
                new[c | (1 << k)] += dist[c] * route_row[k]
        dist = new
    return dist


def _or_combine(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    idx = np.arange(p.size)
    return np.bincount(np.bitwise_or.outer(idx, idx).ravel(), np.outer(p, q).ravel(), minlength=p.size)


def _darks(dist: np.ndarray, dark: np.ndarray) -> np.ndarray:
    for k, d in enumerate(dark):
        dist = _add_dark(dist, k, d)
    return dist


def _add_dark(dist: np.ndarray, k: int, d: float) -> np.ndarray:
    out = dist * (1.0 - d)
    for c in range(dist.size):
        out[c | (1 << k)] += dist[c] * d
    return out


def _state_given_clicks(plan: BinPlan, mask: int) -> np.ndarray:
    down = up = False
    for k in range(plan.channel_count):
        if (mask >> k) & 1:
            down |= plan.actions[k] == 1
            up |= plan.actions[k] == 2
    p = np.zeros(N_STATES)
    if plan.shift_enabled and down != up:
        ok = plan.survival * plan.shift_efficiency
        p[0] = 1.0 - ok
        p[1 if down else 2] = ok
    else:
        p[0] = 1.0
    return p


def enumerate_moments(plan: BinPlan, n_max: int = 8, bg_max: int = 12) -> BinMoments:
    m_count, n_ch = plan.mode_count, plan.channel_count
    if (n_max + 1) ** m_count > 200_000:
        raise ValueError("enumeration too large; lower n_max")
    pmfs = [thermal_pmf(float(mu), n_max) for mu in plan.mu]

    # per (state, mode, n): 4x4 hit-state transfer including the mode's background
    transfer = np.empty((N_STATES, m_count, n_max + 1, 4, 4))
    for s in range(N_STATES):
        for m in range(m_count):
            step = _photon_step(plan.qa[s, m], plan.qb[s, m])
            lam = float(plan.mu_bg[m])
            bg = sum(math.exp(-lam) * lam**b / math.factorial(b) * np.linalg.matrix_power(step, b) for b in range(bg_max + 1))
            power = np.eye(4)
            for n in range(n_max + 1):
                transfer[s, m, n] = power @ bg
                power = power @ step
    dark_step = _photon_step(plan.dark_a, 0.0) @ _photon_step(0.0, plan.dark_b)
    clicks = [[_herald_sets(plan.route[m], n, n_ch) for n in range(n_max + 1)] for m in range(m_count)]
    states = np.array([_state_given_clicks(plan, c) for c in range(1 << n_ch)])
    heralded = np.array([(c & plan.herald_bits) != 0 for c in range(1 << n_ch)])

    acc = np.zeros(7)
    for ns in itertools.product(range(n_max + 1), repeat=m_count):
        weight = math.prod(pmfs[m][n] for m, n in enumerate(ns))
        if weight == 0.0:
            continue
        dist = clicks[0][ns[0]]
        for m in range(1, m_count):
            dist = _or_combine(dist, clicks[m][ns[m]])
        dist = _darks(dist, plan.herald_dark)
        p_state = dist @ states
        p_hstate = (dist * heralded) @ states
        hit = np.empty((N_STATES, 4))
        for s in range(N_STATES):
            v = np.array([1.0, 0.0, 0.0, 0.0])
            for m, n in enumerate(ns):
                v = v @ transfer[s, m, n]
            hit[s] = v @ dark_step
        pa, pb, pab = hit @ _HIT_A, hit @ _HIT_B, hit[:, 3]
        acc += weight * np.array(
            [p_hstate.sum(), p_hstate @ pa, p_hstate @ pb, p_hstate @ pab, p_state @ pa, p_state @ pb, p_state @ pab]
        )
    return BinMoments(values=acc, cov=np.zeros((7, 7)), bin_rate=plan.bin_rate)


def truncation_mass(plan: BinPlan, n_max: int = 8) -> float:
    """Probability of any mode exceeding ``n_max`` pairs."""
    return float(1.0 - np.prod([thermal_pmf(float(mu), n_max).sum() for mu in plan.mu]))
