"""Compare the numba and numpy click kernels on the same plan and seed.

    python benchmarks/bench_kernels.py --bins 2e8 --power 16.98

Prints one line per backend (wall time, bins per second, clicks) and checks
that both backends land on the same expected rate within statistical error.
"""
from __future__ import annotations

import argparse
import json
import time

from hspsmux.config import load_preset
from hspsmux import kernels
from hspsmux.oracle import enumerate_moments
from hspsmux.simulator import DEFAULT_ACCIDENTAL_DELAYS, Arrangement, build_plan, simulate


def run(backend: str, plan, n_bins: int, seed: int, repeats: int) -> dict:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        rec = simulate(plan, n_bins, seed, backend=backend)
        times.append(time.perf_counter() - t0)
    rep = rec.metrics(DEFAULT_ACCIDENTAL_DELAYS)
    best = min(times)
    return {
        "backend": backend,
        "seconds": round(best, 3),
        "bins_per_s": float(f"{n_bins / best:.4g}"),
        "clicked_bins": int(rec.bins.size),
        "hsp_rate_khz": float(f"{rep.hsp_rate:.5g}"),
        "car": float(f"{rep.car:.4g}"),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--bins", type=float, default=2e8)
    p.add_argument("--power", type=float, default=16.98, help="pump power in mW")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--repeats", type=int, default=2, help="best of N (the first numba call compiles)")
    p.add_argument("--json", action="store_true")
    args = p.parse_args(argv)

    model = load_preset("paper2021").system_model().with_power(args.power)
    plan = build_plan(model, Arrangement.mux())
    n_bins = int(args.bins)
    expected = enumerate_moments(plan).rate_khz()[0]
    results = [run(b, plan, n_bins, args.seed, args.repeats) for b in kernels.BACKENDS]
    if args.json:
        print(json.dumps({"expected_hsp_rate_khz": expected, "results": results}, indent=2))
    else:
        print(f"plan: mux, {args.power} mW, mu={plan.mu[0]:.3g}, {n_bins:.3g} bins; oracle rate {expected:.5g} kHz")
        for r in results:
            print(f"{r['backend']:>6}: {r['seconds']:8.2f} s  {r['bins_per_s']:.3g} bins/s  "
                  f"rate {r['hsp_rate_khz']} kHz  CAR {r['car']}")
        speedup = results[1]["seconds"] / results[0]["seconds"]
        print(f"numba speed-up over numpy: {speedup:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
