"""Compiled kernels. Same contracts as ``_kernels_numpy``; random streams differ."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_NEVER = np.iinfo(np.int64).max


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True, inline="always")
def _gap(p):
    if p <= 0.0:
        return _NEVER
    if p >= 1.0:
        return 1
    u = 1.0 - np.random.random()
    return 1 + np.int64(math.floor(math.log(u) / math.log1p(-p)))


@njit(cache=True)
def _zt_poisson(lam):
    u = np.random.random()
    pk = lam * math.exp(-lam) / -math.expm1(-lam)
    cdf = pk
    k = 1
    while u > cdf and k < 500:
        k += 1
        pk *= lam / k
        cdf += pk
    return k


@njit(cache=True)
def _simulate(n_bins, probs, log_x, mu_bg, route_cum, actions, shift_enabled,
              survival, efficiency, qa, qb, capacity):
    n_modes = log_x.size
    n_ch = route_cum.shape[1]
    n_streams = probs.size
    nxt = np.empty(n_streams, np.int64)
    for s in range(n_streams):
        g = _gap(probs[s])
        nxt[s] = g - 1 if g != _NEVER else _NEVER

    out_bins = np.empty(capacity, np.int64)
    out_mask = np.empty(capacity, np.int64)
    out_a = np.empty(capacity, np.bool_)
    out_b = np.empty(capacity, np.bool_)
    counters = np.zeros(4, np.int64)  # attempted, survived, applied, conflicts
    n = np.zeros(n_modes, np.int64)
    nb = np.zeros(n_modes, np.int64)
    n_out = 0
    overflow = False

    while True:
        t = _NEVER
        for s in range(n_streams):
            if nxt[s] < t:
                t = nxt[s]
        if t >= n_bins:
            break
        n[:] = 0
        nb[:] = 0
        mask = 0
        dark_a = False
        dark_b = False
        for s in range(n_streams):
            if nxt[s] != t:
                continue
            g = _gap(probs[s])
            nxt[s] = t + g if g != _NEVER else _NEVER
            if s < n_modes:
                u = 1.0 - np.random.random()
                n[s] = 1 + np.int64(math.floor(math.log(u) / log_x[s]))
            elif s < 2 * n_modes:
                nb[s - n_modes] = _zt_poisson(mu_bg[s - n_modes])
            elif s < 2 * n_modes + n_ch:
                mask |= 1 << (s - 2 * n_modes)
            elif s == 2 * n_modes + n_ch:
                dark_a = True
            else:
                dark_b = True

        for m in range(n_modes):
            for _ in range(n[m]):
                u = np.random.random()
                for k in range(n_ch):
                    if u < route_cum[m, k]:
                        mask |= 1 << k
                        break

        state = 0
        if shift_enabled and mask != 0:
            down = False
            up = False
            for k in range(n_ch):
                if (mask >> k) & 1:
                    if actions[k] == 1:
                        down = True
                    elif actions[k] == 2:
                        up = True
            if down and up:
                counters[3] += 1
            elif down or up:
                counters[0] += 1
                if np.random.random() < survival:
                    counters[1] += 1
                    if np.random.random() < efficiency:
                        counters[2] += 1
                        state = 1 if down else 2

        hit_a = dark_a
        hit_b = dark_b
        for m in range(n_modes):
            pa = qa[state, m]
            pab = pa + qb[state, m]
            for _ in range(n[m] + nb[m]):
                u = np.random.random()
                if u < pa:
                    hit_a = True
                elif u < pab:
                    hit_b = True

        if mask != 0 or hit_a or hit_b:
            if n_out >= capacity:
                overflow = True
                break
            out_bins[n_out] = t
            out_mask[n_out] = mask
            out_a[n_out] = hit_a
            out_b[n_out] = hit_b
            n_out += 1

    return out_bins[:n_out], out_mask[:n_out], out_a[:n_out], out_b[:n_out], counters, overflow


def simulate_clicks(n_bins, seed, probs, log_x, mu_bg, route_cum, actions, shift_enabled,
                    survival, efficiency, qa, qb, capacity):
    _seed(np.uint32(seed))
    return _simulate(np.int64(n_bins), probs, log_x, mu_bg, route_cum, actions, bool(shift_enabled),
                     float(survival), float(efficiency), qa, qb, np.int64(capacity))


@njit(cache=True)
def delay_histogram(a, b, max_delay):
    counts = np.zeros(2 * max_delay + 1, np.int64)
    j0 = 0
    nb = b.size
    for i in range(a.size):
        lo = a[i] - max_delay
        while j0 < nb and b[j0] < lo:
            j0 += 1
        j = j0
        hi = a[i] + max_delay
        while j < nb and b[j] <= hi:
            counts[b[j] - a[i] + max_delay] += 1
            j += 1
    return counts
