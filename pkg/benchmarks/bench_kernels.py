"""Compare the compiled and pure-Python Bessel kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best-of-repeat wall time for the workloads the solver issues
(full tables on quadrature nodes, single orders on large arguments) and the
largest disagreement between the two backends.
"""
import argparse
import time

import numpy as np

from tiwire.kernels import get_backend

WORKLOADS = [
    ("table nmax=8, 24k nodes", "table", 8, np.linspace(0.0, 250.0, 24_000)),
    ("table nmax=3, 2k nodes", "table", 3, np.linspace(0.0, 60.0, 2_000)),
    ("J_5, 100k points", "single", 5, np.linspace(0.0, 400.0, 100_000)),
    ("J_0, 1k points", "single", 0, np.linspace(0.0, 30.0, 1_000)),
]


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = get_backend("python")
    try:
        ext = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; only the python backend is available")
        ext = None
    print(f"{'workload':28s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s} {'max diff':>9s}")
    for name, kind, n, x in WORKLOADS:
        call = (lambda mod: mod.jn_table(n, x)) if kind == "table" else (lambda mod: mod.jn(n, x))
        t_py = best_time(lambda: call(py), args.repeat)
        if ext is None:
            print(f"{name:28s} {t_py * 1e3:10.2f} {'-':>12s}")
            continue
        t_ext = best_time(lambda: call(ext), args.repeat)
        diff = float(np.max(np.abs(np.asarray(call(py)) - np.asarray(call(ext)))))
        print(f"{name:28s} {t_py * 1e3:10.2f} {t_ext * 1e3:12.2f} {t_py / t_ext:7.1f}x {diff:9.1e}")


if __name__ == "__main__":
    main()
