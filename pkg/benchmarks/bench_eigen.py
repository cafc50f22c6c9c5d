"""Compare the Jacobi eigensolver kernels against each other and numpy.

Times the compiled Cython sweep and the pure NumPy fallback on random
symmetric matrices across sizes, with numpy.linalg.eigh as the accuracy
reference. Run:

    python3 benchmarks/bench_eigen.py [--sizes 8,16,36,64] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from regionwalk.eigen import available_kernels, jacobi_eigh


def _time_kernel(a: np.ndarray, kernel: str, repeats: int) -> tuple[float, float]:
    best = float("inf")
    w = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        w, _ = jacobi_eigh(a, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    ref = np.linalg.eigh((a + a.T) / 2.0)[0]
    return best, float(np.abs(np.sort(w) - np.sort(ref)).max())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="8,16,36,64,96")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    kernels = available_kernels()
    rng = np.random.default_rng(args.seed)

    print(f"kernels available: {', '.join(kernels)}")
    print(f"{'n':>5s} " + " ".join(f"{k:>14s} {'dev':>9s}" for k in kernels) + f" {'numpy':>10s}")
    for n in sizes:
        m = rng.standard_normal((n, n))
        a = (m + m.T) / 2.0
        cells = []
        for kernel in kernels:
            elapsed, dev = _time_kernel(a, kernel, args.repeats)
            cells.append(f"{elapsed * 1e3:>12.3f}ms {dev:>9.1e}")
        t0 = time.perf_counter()
        for _ in range(args.repeats):
            np.linalg.eigh(a)
        ref_ms = (time.perf_counter() - t0) / args.repeats * 1e3
        print(f"{n:>5d} " + " ".join(cells) + f" {ref_ms:>8.3f}ms")


if __name__ == "__main__":
    main()
