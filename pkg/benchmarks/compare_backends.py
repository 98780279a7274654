#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-numpy fallback.

Times the two hot kernels (counter-hash word generation and the sequential
reverse chain) on both backends and checks that their outputs agree
bit-for-bit. Run from the repository root:

    python benchmarks/compare_backends.py
"""
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from anosynth._kernels import _pure  # noqa: E402

try:
    from anosynth import _native
except ImportError:
    _native = None


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_counter_words(impl, n=5_000_000):
    return best_of(lambda: impl.counter_words(0x1234_5678, 0, n))


def bench_posterior_chain(impl, m=1000, n=4096):
    rng = np.random.RandomState(0)
    x = rng.rand(n)
    x0 = rng.rand(n)
    a, b, s = rng.rand(m), rng.rand(m) * 0.9, rng.rand(m) * 0.1
    eps = rng.randn(m, n)
    return best_of(lambda: impl.posterior_chain(x, x0, a, b, s, eps))


def main():
    if _native is None:
        print("compiled extension not built; run `python setup.py build_ext "
              "--inplace` first (pure backend still works)")
        return 1

    w_p = _pure.counter_words(7, 0, 100_000)
    w_n = _native.counter_words(7, 0, 100_000)
    rng = np.random.RandomState(1)
    args = (rng.rand(512), rng.rand(512), rng.rand(64), rng.rand(64),
            rng.rand(64), rng.randn(64, 512))
    c_p = _pure.posterior_chain(*args)
    c_n = _native.posterior_chain(*args)
    print(f"bit-identical outputs: words={np.array_equal(w_p, w_n)}, "
          f"chain={np.array_equal(c_p, c_n)}")

    rows = [
        ("counter_words (5e6 words)", bench_counter_words(_pure),
         bench_counter_words(_native)),
        ("posterior_chain (1000 x 4096)", bench_posterior_chain(_pure),
         bench_posterior_chain(_native)),
        ("posterior_chain (1000 x 64)",
         bench_posterior_chain(_pure, n=64), bench_posterior_chain(_native, n=64)),
    ]
    print(f"{'kernel':34s} {'pure':>10s} {'native':>10s} {'speedup':>8s}")
    for name, tp, tn in rows:
        print(f"{name:34s} {tp * 1e3:9.2f}ms {tn * 1e3:9.2f}ms {tp / tn:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
