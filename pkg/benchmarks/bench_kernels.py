"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the two per-step hot loops (particle advance with absorbing
boundaries, particle-to-box binning) at several particle counts, then a
full reference-scenario step loop under each backend.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from lbsim import _kernels_py

try:
    from lbsim import _kernels as _compiled
except ImportError:
    _compiled = None


def particles(n, extent, seed=42):
    rng = np.random.default_rng(seed)
    pos = np.ascontiguousarray(rng.uniform(0, extent, size=(n, 2)))
    vel = np.ascontiguousarray(rng.normal(0, 0.05, size=(n, 2)))
    return pos, vel


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(sizes, repeats):
    extent = 960.0
    backends = [("python", _kernels_py)]
    if _compiled is not None:
        backends.append(("compiled", _compiled))
    print(f"{'kernel':<10} {'n':>10} " +
          " ".join(f"{name + ' [ms]':>14}" for name, _ in backends) +
          f" {'speedup':>8}")
    for n in sizes:
        pos, vel = particles(n, extent)
        row = []
        for _, impl in backends:
            row.append(best_of(
                lambda impl=impl: impl.advance_particles(pos, vel, extent,
                                                         extent), repeats))
        speedup = row[0] / row[-1] if len(row) > 1 else float("nan")
        print(f"{'advance':<10} {n:>10} " +
              " ".join(f"{t * 1e3:>14.3f}" for t in row) +
              f" {speedup:>7.1f}x")
        row = []
        for _, impl in backends:
            row.append(best_of(
                lambda impl=impl: impl.bin_particles(pos, 32.0, 30, 30),
                repeats))
        speedup = row[0] / row[-1] if len(row) > 1 else float("nan")
        print(f"{'bin':<10} {n:>10} " +
              " ".join(f"{t * 1e3:>14.3f}" for t in row) +
              f" {speedup:>7.1f}x")


def bench_scenario(steps):
    # Full stepping loop, dominated by the kernels at this scale.
    import lbsim.kernels as kernels
    from lbsim.scenarios import apply_overrides, load_spec
    from lbsim.workload import run_simulation

    results = {}
    backends = [("python", _kernels_py)]
    if _compiled is not None:
        backends.append(("compiled", _compiled))
    saved = (kernels.advance_particles, kernels.bin_particles)
    try:
        for name, impl in backends:
            kernels.advance_particles = impl.advance_particles
            kernels.bin_particles = impl.bin_particles
            spec = apply_overrides(load_spec("default"), steps=steps)
            t0 = time.perf_counter()
            res = run_simulation(spec.scenario, spec.policy,
                                 spec.build_provider())
            results[name] = (time.perf_counter() - t0,
                             res.summary["mean_efficiency"])
    finally:
        kernels.advance_particles, kernels.bin_particles = saved

    print(f"\nreference scenario, {steps} steps:")
    for name, (dt, eff) in results.items():
        print(f"  {name:<10} {dt:8.2f} s   mean efficiency {eff:.6f}")
    if len(results) == 2:
        effs = {eff for _, eff in results.values()}
        print(f"  speedup {results['python'][0] / results['compiled'][0]:.1f}x;"
              f" results identical: {len(effs) == 1}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="smaller sizes, fewer repeats")
    args = parser.parse_args()
    if _compiled is None:
        print("note: compiled kernels not built; timing the fallback only")
    sizes = [10_000, 100_000] if args.quick else [10_000, 100_000, 1_000_000]
    bench_kernels(sizes, repeats=3 if args.quick else 5)
    bench_scenario(steps=100 if args.quick else 400)


if __name__ == "__main__":
    main()
