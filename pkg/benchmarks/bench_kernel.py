"""Compare the compiled and pure-Python slot kernels on the star network.

    python benchmarks/bench_kernel.py --slots 50000 --repeat 3

Prints slots per second for each backend, the speedup, and whether the two
trajectories are bitwise identical.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from delaybp import kernels
from delaybp.engine import SimConfig, run
from delaybp.presets import table2_scenario
from delaybp.scheduler import Plan


def bench(backend: str, slots: int, repeat: int, rate: float):
    sc = table2_scenario(rate)
    plan = Plan(sc.spec)
    cfg = SimConfig(horizon=slots, seed=1, stride=100)
    best, traj = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = run(sc.spec, sc.params, sc.arrivals, sc.channel, cfg, plan=plan, kernel=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=50_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--rate", type=float, default=0.64)
    args = ap.parse_args(argv)

    results = {}
    for backend in ("cython", "python"):
        try:
            kernels.get_kernel(backend)
        except ImportError as exc:
            print(f"{backend:7s} unavailable: {exc}")
            continue
        secs, traj = bench(backend, args.slots, args.repeat, args.rate)
        results[backend] = (secs, traj)
        print(f"{backend:7s} {secs:8.3f} s  {args.slots / secs:12,.0f} slots/s")
    if len(results) == 2:
        (tc, a), (tp, b) = results["cython"], results["python"]
        same = all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("Q", "A", "D", "R", "S"))
        print(f"speedup {tp / tc:.1f}x, identical trajectories: {same}")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
