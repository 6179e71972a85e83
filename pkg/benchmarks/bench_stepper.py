#!/usr/bin/env python3
"""Benchmark the compiled loop kernel against the pure-Python fallback.

Runs the standard drift experiment (11232 samples at 0.24 Hz) with both
kernels, reports throughput, and verifies the trajectories are
bit-identical.
"""

import time

import numpy as np

from thermobalance.config import RunConfig
from thermobalance.control import FlowSchedule, available_kernels, run_closed_loop

N_REPEATS = 5
DURATION = 46800.0
FS = 0.24


def run_once(cfg, influence, kernel, seed):
    plant = cfg.build_plant(influence)
    ctrl = cfg.build_controller(plant, 0.0)
    return run_closed_loop(
        plant, ctrl, FlowSchedule.constant(0.0), 1e-3, FS, DURATION, seed, kernel=kernel
    )


def main():
    cfg = RunConfig({}).replace(p_total_mw=1.0, f_s_hz=FS, duration_s=DURATION, q_ul_min=0.0)
    print("building model and influence table ...")
    model = cfg.build_model()
    influence = cfg.build_influence(model)
    n_samples = int(round(DURATION * FS))

    results = {}
    for kernel in ("python", "compiled"):
        if kernel not in available_kernels():
            print(f"{kernel:>9s}: not available")
            continue
        best = float("inf")
        for rep in range(N_REPEATS):
            t0 = time.perf_counter()
            ts = run_once(cfg, influence, kernel, seed=1)
            best = min(best, time.perf_counter() - t0)
        results[kernel] = (best, ts)
        print(f"{kernel:>9s}: {best * 1e3:8.2f} ms best of {N_REPEATS} "
              f"({n_samples / best / 1e3:8.1f} ksamples/s)")

    if len(results) == 2:
        speedup = results["python"][0] / results["compiled"][0]
        same = np.array_equal(results["python"][1].data, results["compiled"][1].data)
        print(f"\nspeedup: {speedup:.1f}x   trajectories bit-identical: {same}")
        if not same:
            raise SystemExit("kernel mismatch")


if __name__ == "__main__":
    main()
