"""Backend dispatch for the hot loops.

``HSPSMUX_BACKEND=numpy`` forces the vectorised fallback; the default is
numba when importable.  The variable is read on every call so tests can flip it.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

from . import _kernels_numpy

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernels_numba = None

BACKENDS = ("numba", "numpy")
ENV_VAR = "HSPSMUX_BACKEND"


def active_backend(name: str | None = None) -> str:
    name = (name or os.environ.get(ENV_VAR, "numba")).lower()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and _kernels_numba is None:
        warnings.warn("numba unavailable, falling back to numpy kernels", RuntimeWarning)
        return "numpy"
    return name


def _impl(backend):
    return _kernels_numba if active_backend(backend) == "numba" else _kernels_numpy


def simulate_clicks(n_bins, seed, probs, log_x, mu_bg, route_cum, actions, shift_enabled,
                    survival, efficiency, qa, qb, capacity, backend=None):
    """Event-driven click simulation over ``n_bins`` bins.

    ``probs`` holds per-bin mark probabilities of the independent streams in
    order: thermal n>=1 per mode, background per mode, herald darks per
    channel, dark A, dark B.  Returns (bins, herald_mask, a, b, counters,
    overflow) for every bin with at least one click.
    """
    return _impl(backend).simulate_clicks(
        int(n_bins), int(seed),
        np.ascontiguousarray(probs, dtype=np.float64),
        np.ascontiguousarray(log_x, dtype=np.float64),
        np.ascontiguousarray(mu_bg, dtype=np.float64),
        np.ascontiguousarray(route_cum, dtype=np.float64),
        np.ascontiguousarray(actions, dtype=np.int64),
        bool(shift_enabled), float(survival), float(efficiency),
        np.ascontiguousarray(qa, dtype=np.float64),
        np.ascontiguousarray(qb, dtype=np.float64),
        int(capacity),
    )


def delay_histogram(a, b, max_delay: int, backend=None) -> np.ndarray:
    """Counts of (b - a) for each delay in [-max_delay, max_delay]; inputs sorted."""
    if max_delay < 0:
        raise ValueError("max_delay must be >= 0")
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    return _impl(backend).delay_histogram(a, b, int(max_delay))
