"""Time the compiled stable kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--points 400] [--repeat 3]

Reports the best wall time per call over ``--repeat`` runs, the per-point
cost and the largest relative disagreement between the two backends.
"""
import argparse
import time

import numpy as np

from heavytail import _backend
from heavytail.stable import cdf_std, pdf_std

CASES = [(0.5, 1.0), (0.8, -0.3), (1.0, 0.95), (1.3, 0.5), (1.7, -0.9), (1.95, 0.0)]


def best_time(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.compiled_kernels is None:
        raise SystemExit("compiled kernels are not built; nothing to compare")
    z = np.sinh(np.linspace(-6, 6, args.points))
    print(f"{'kernel':6} {'alpha':>5} {'beta':>5} {'cython ms':>10} {'python ms':>10} "
          f"{'speedup':>8} {'max rel diff':>12}")
    speedups = []
    for name, fn in (("pdf", pdf_std), ("cdf", cdf_std)):
        for a, b in CASES:
            tc, vc = best_time(lambda: fn(z, a, b, backend="cython"), args.repeat)
            tp, vp = best_time(lambda: fn(z, a, b, backend="python"), args.repeat)
            rel = np.max(np.abs(vc - vp) / np.maximum(np.abs(vp), 1e-300))
            speedups.append(tp / tc)
            print(f"{name:6} {a:5.2f} {b:5.2f} {1e3 * tc:10.2f} {1e3 * tp:10.2f} "
                  f"{tp / tc:8.1f} {rel:12.2e}")
    print(f"\n{args.points} points per call; median speedup {np.median(speedups):.1f}x")


if __name__ == "__main__":
    main()
