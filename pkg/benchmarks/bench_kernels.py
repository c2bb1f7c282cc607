"""Compare the compiled and pure-numpy block weight-update kernels.

Times block_sqrt_gram on realistic problem sizes and checks that both
backends agree to near machine precision. Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from reloreta import _block_np

try:
    from reloreta import _block_cy
except ImportError:
    _block_cy = None


def make_inputs(k: int, m: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    htb = np.ascontiguousarray(rng.standard_normal((k, 3, m)))
    a = rng.standard_normal((m, m))
    p = a @ a.T  # symmetric PSD
    return htb, p


def time_kernel(fn, htb, p, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(htb, p)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    if _block_cy is None:
        print("compiled backend not available; showing numpy timings only")
    for k, m in ((300, 20), (1000, 20), (2100, 20), (2100, 64)):
        htb, p = make_inputs(k, m)
        t_np = time_kernel(_block_np.block_sqrt_gram, htb, p)
        line = f"K={k:5d} M={m:3d}  numpy {t_np * 1e3:8.2f} ms"
        if _block_cy is not None:
            t_cy = time_kernel(_block_cy.block_sqrt_gram, htb, p)
            w_np, wi_np = _block_np.block_sqrt_gram(htb, p)
            w_cy, wi_cy = _block_cy.block_sqrt_gram(htb, p)
            dev = max(
                float(np.abs(w_np - w_cy).max()),
                float(np.abs(wi_np - wi_cy).max()),
            )
            line += f"  cython {t_cy * 1e3:8.2f} ms  speedup {t_np / t_cy:5.2f}x  max|diff| {dev:.2e}"
            assert dev < 1e-10, f"backends disagree by {dev:g}"
        print(line)


if __name__ == "__main__":
    main()
