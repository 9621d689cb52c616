"""Compiled kernel versus numpy fallback on the two-pulse imaging run.

Usage: python benchmarks/bench_kernel.py [--repeat N] [--nz N]
"""
from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from gemlens.config import bundled_scenarios, load_scenario
from gemlens.solver import available_backends, run


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--nz", type=int, default=512)
    args = ap.parse_args(argv)

    sc = load_scenario(bundled_scenarios()["two_pulse"])
    outputs = {}
    print(f"{'backend':>9} {'best s':>8} {'mean s':>8} {'steps/s':>10}")
    for backend in available_backends():
        settings = replace(sc.settings, nz=args.nz, snapshot_every=0, backend=backend)
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            res = run(sc.timeline, sc.source, sc.ensemble, settings)
            times.append(time.perf_counter() - t0)
        steps = sc.timeline.t_end / res.dt
        outputs[backend] = res.output.samples
        print(f"{backend:>9} {min(times):8.3f} {np.mean(times):8.3f} {steps / min(times):10.0f}")
    if len(outputs) == 2:
        a, b = outputs["compiled"], outputs["python"]
        print(f"max relative difference: {np.abs(a - b).max() / np.abs(b).max():.2e}")
    else:
        print("compiled kernel not available; only the numpy backend was timed")


if __name__ == "__main__":
    main()
