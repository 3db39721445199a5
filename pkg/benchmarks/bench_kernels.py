"""Compare the compiled cascade kernel with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per (family, depth): replicates per second for each backend,
the speedup, and the largest relative difference between the two outputs on
the same stream.
"""
import argparse
import time

import numpy as np

from cascade_lab import generator, kernels
from cascade_lab.rng import stream

CASES = [
    ("lognormal:0.5", 6, 20_000),
    ("lognormal:0.5", 12, 400),
    ("log-weibull:1:2", 12, 400),
    ("lognormal:0.5", 16, 25),
]


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.BACKEND == kernels.pure.BACKEND:
        print("compiled extension not available; only the fallback can be timed")
    print(f"{'generator':<18}{'depth':>6}{'count':>8}{'compiled/s':>14}{'numpy/s':>12}{'speedup':>9}{'max rel diff':>14}")
    for text, depth, count in CASES:
        params = generator.parse_spec(text).kernel_params()
        tc, yc = _time(lambda: kernels.cascade_batch(stream(1, 0, 0), *params, depth, count), args.repeat)
        tp, yp = _time(lambda: kernels.pure.cascade_batch(stream(1, 0, 0), *params, depth, count), args.repeat)
        diff = float(np.max(np.abs(yc - yp) / yp))
        print(f"{text:<18}{depth:>6}{count:>8}{count / tc:>14.0f}{count / tp:>12.0f}{tp / tc:>9.2f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
