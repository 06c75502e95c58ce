"""Compare the compiled and numpy kernels on the chain estimators and LCD scan.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from lyaprod import kernels
from lyaprod.chain import (
    ChainConfig,
    least_exponent_distance,
    second_exponent_pair,
    spectrum_qr,
    top_exponent,
)
from lyaprod.ensembles import EnsembleSpec
from lyaprod.structure import LcdQuery, lcd

CASES = [
    ("top       n=10  N=2e5", lambda b: top_exponent(ChainConfig(EnsembleSpec("gaussian", 10), 200_000), backend=b)),
    ("pair      n=10  N=1e5", lambda b: second_exponent_pair(ChainConfig(EnsembleSpec("gaussian", 10), 100_000), backend=b)),
    ("qr k=10   n=10  N=1e5", lambda b: spectrum_qr(ChainConfig(EnsembleSpec("gaussian", 10), 100_000), backend=b)),
    ("qr k=4    n=4   N=2e5", lambda b: spectrum_qr(ChainConfig(EnsembleSpec("symplectic_wigner", 2, model_params={"lambda": 0.1, "E": 1.0}), 200_000), backend=b)),
    ("least     n=20  N=1e4", lambda b: least_exponent_distance(ChainConfig(EnsembleSpec("gaussian", 20), 10_000), backend=b)),
    ("lcd scan  n=8   D=1e5", lambda b: lcd(np.random.default_rng(0).standard_normal(8),
                                             LcdQuery(0.5, 0.05, theta_max=1e5), backend=b)),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available()
    print(f"{'case':<24}" + "".join(f"{b:>12}" for b in backends)
          + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in CASES:
        t = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        row = f"{name:<24}" + "".join(f"{t[b]:>11.3f}s" for b in backends)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
