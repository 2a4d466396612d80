"""Vectorised reference kernels used when numba is unavailable or disabled."""
from __future__ import annotations

import numpy as np


def _mark_positions(rng, p, n_bins):
    if p <= 0.0:
        return np.empty(0, np.int64)
    if p >= 1.0:
        return np.arange(n_bins, dtype=np.int64)
    expected = n_bins * p
    chunks, last = [], -1
    while last < n_bins:
        size = int(expected + 6.0 * np.sqrt(expected) + 32)
        pos = last + np.cumsum(rng.geometric(p, size), dtype=np.int64)
        chunks.append(pos)
        last = int(pos[-1])
    pos = np.concatenate(chunks)
    return pos[pos < n_bins]


def _zt_poisson(rng, lam, size):
    u = rng.random(size)
    k = np.ones(size, np.int64)
    pk = np.full(size, lam * np.exp(-lam) / -np.expm1(-lam))
    cdf = pk.copy()
    todo = u > cdf
    j = 1
    while todo.any() and j < 500:
        j += 1
        pk = pk * lam / j
        cdf = cdf + pk
        k[todo] = j
        todo &= u > cdf
    return k


def _split(rng, counts, p):
    p = np.clip(p, 0.0, 1.0)
    return rng.binomial(counts, p)


def simulate_clicks(n_bins, seed, probs, log_x, mu_bg, route_cum, actions, shift_enabled,
                    survival, efficiency, qa, qb, capacity):
    rng = np.random.default_rng(seed)
    n_modes = log_x.size
    n_ch = route_cum.shape[1]
    n_streams = probs.size

    marks = [_mark_positions(rng, float(p), int(n_bins)) for p in probs]
    sid = np.concatenate([np.full(m.size, s, np.int64) for s, m in enumerate(marks)])
    allpos = np.concatenate(marks)
    bins, inv = np.unique(allpos, return_inverse=True)
    n_ev = bins.size
    flags = np.zeros((n_ev, n_streams), bool)
    flags[inv, sid] = True

    n = np.zeros((n_ev, n_modes), np.int64)
    nb = np.zeros((n_ev, n_modes), np.int64)
    for m in range(n_modes):
        idx = np.flatnonzero(flags[:, m])
        u = 1.0 - rng.random(idx.size)
        n[idx, m] = 1 + np.floor(np.log(u) / log_x[m]).astype(np.int64)
        idx = np.flatnonzero(flags[:, n_modes + m])
        if idx.size:
            nb[idx, m] = _zt_poisson(rng, mu_bg[m], idx.size)

    clicks = flags[:, 2 * n_modes: 2 * n_modes + n_ch].copy()
    route = np.diff(np.concatenate([np.zeros((n_modes, 1)), route_cum], axis=1), axis=1)
    for m in range(n_modes):
        remaining = n[:, m].copy()
        rest = 1.0
        for k in range(n_ch):
            if route[m, k] <= 0.0:
                continue
            c = _split(rng, remaining, route[m, k] / rest if rest > 0 else 0.0)
            clicks[:, k] |= c > 0
            remaining -= c
            rest -= route[m, k]
    mask = (clicks.astype(np.int64) << np.arange(n_ch, dtype=np.int64)).sum(axis=1)

    counters = np.zeros(4, np.int64)
    state = np.zeros(n_ev, np.int64)
    if shift_enabled:
        down = (clicks & (actions == 1)).any(axis=1)
        up = (clicks & (actions == 2)).any(axis=1)
        attempt = down ^ up
        survived = attempt & (rng.random(n_ev) < survival)
        applied = survived & (rng.random(n_ev) < efficiency)
        state = np.where(applied, np.where(down, 1, 2), 0)
        counters[:] = attempt.sum(), survived.sum(), applied.sum(), (down & up).sum()

    photons = n + nb
    pa = qa[state]
    pb = qb[state]
    ca = _split(rng, photons, pa)
    with np.errstate(divide="ignore", invalid="ignore"):
        pb_rest = np.where(pa < 1.0, pb / (1.0 - pa), 0.0)
    cb = _split(rng, photons - ca, pb_rest)
    hit_a = (ca.sum(axis=1) > 0) | flags[:, 2 * n_modes + n_ch]
    hit_b = (cb.sum(axis=1) > 0) | flags[:, 2 * n_modes + n_ch + 1]

    keep = (mask != 0) | hit_a | hit_b
    return bins[keep], mask[keep], hit_a[keep], hit_b[keep], counters, False


def delay_histogram(a, b, max_delay, chunk=1 << 18):
    counts = np.zeros(2 * max_delay + 1, np.int64)
    for s in range(0, a.size, chunk):
        aa = a[s: s + chunk]
        lo = np.searchsorted(b, aa - max_delay, side="left")
        hi = np.searchsorted(b, aa + max_delay, side="right")
        width = hi - lo
        total = int(width.sum())
        if total == 0:
            continue
        owner = np.repeat(np.arange(aa.size), width)
        start = np.repeat(lo - np.concatenate([[0], np.cumsum(width)[:-1]]), width)
        j = start + np.arange(total)
        counts += np.bincount(b[j] - aa[owner] + max_delay, minlength=counts.size)
    return counts
