"""Compare the compiled kernels with their pure-python and numpy fallbacks.

    python benchmarks/bench_kernels.py [--blocks N] [--repeat R]

Each variant runs the public entry point with the kernel swapped in, so the
timings include the same setup work a user would pay. Outputs of all
variants are checked for agreement before timing is reported.
"""

import argparse
import time
from unittest import mock

import numpy as np

from powlab import _kernels
from powlab._backend import HAVE_NUMBA
from powlab.da import DifficultyParams
from powlab.miners import MinerPopulation
from powlab.sim import SimConfig, run_simulation, simulate_rtt_thinning


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_simulation(blocks, repeat):
    rows = []
    for da in ("cw144", "nefda"):
        cfg = SimConfig(da=da, population=MinerPopulation.scaled(1.0, 4.0, 4.0), n_blocks=blocks, seed=1)
        variants = {"python": _kernels.simulate_chain.py_func}
        if HAVE_NUMBA:
            run_simulation(cfg.with_(n_blocks=10))  # compile or load from cache outside the timing
            variants = {"numba": _kernels.simulate_chain, **variants}
        results = {}
        for name, fn in variants.items():
            with mock.patch.object(_kernels, "simulate_chain", fn):
                results[name] = best_of(lambda: run_simulation(cfg), repeat if name == "numba" else 1)
        ref = next(iter(results.values()))[1]
        for _, r in results.values():
            np.testing.assert_allclose(r.timestamps, ref.timestamps, atol=2e-3)
        rows += [(f"simulate {da}", name, sec, blocks / sec) for name, (sec, _) in results.items()]
    return rows


def bench_thinning(blocks, repeat):
    params = DifficultyParams(smoothing=43200.0)
    n = max(blocks // 10, 100)
    variants = {"numpy": _kernels._thinning_numpy, "python": _kernels._thinning_loop.py_func}
    if HAVE_NUMBA:
        simulate_rtt_thinning(5, 1.0, 600.0, params, chunk=1 << 12)
        variants = {"numba": _kernels._thinning_loop, **variants}
    results = {}
    for name, fn in variants.items():
        with mock.patch.object(_kernels, "thinning_scan", fn):
            reps = 1 if name == "python" else repeat
            results[name] = best_of(lambda: simulate_rtt_thinning(n, 1.0, 600.0, params, seed=3), reps)
    ref = next(iter(results.values()))[1]
    for _, out in results.values():
        np.testing.assert_array_equal(out, ref)
    return [("thinning nefda", name, sec, n / sec) for name, (sec, _) in results.items()]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rows = bench_simulation(args.blocks, args.repeat) + bench_thinning(args.blocks, args.repeat)
    print(f"{'workload':16s} {'backend':8s} {'seconds':>10s} {'blocks/s':>12s} {'speedup':>9s}")
    slowest = {}
    for work, _, sec, _ in rows:
        slowest[work] = max(slowest.get(work, 0.0), sec)
    for work, name, sec, rate in rows:
        print(f"{work:16s} {name:8s} {sec:10.4f} {rate:12.0f} {slowest[work] / sec:8.1f}x")


if __name__ == "__main__":
    main()
