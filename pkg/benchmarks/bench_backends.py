"""Compare the compiled MLP kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_backends.py [--repeats 200]

Reports forward and forward+backward wall time per call for the network sizes
the dispatcher actually uses (the 14->58 Q-network and the 15->1 Guider) at
matching-round and training batch sizes.
"""

from __future__ import annotations

import argparse
import os
import time

# single-threaded BLAS for stable, comparable timings
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np

from poolnet.neural import Mlp, _mlp_py

try:
    from poolnet.neural import _fastmlp
except ImportError:
    _fastmlp = None

ROUNDS = 7  # best-of-rounds, interleaved across backends


def time_call(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(ROUNDS):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def bench(dims, batch, dtype, repeats):
    net = Mlp.create(dims, seed=1, dtype=dtype)
    x = np.random.default_rng(0).standard_normal((batch, dims[0])).astype(dtype)
    d_out = np.random.default_rng(1).standard_normal((batch, dims[-1])).astype(np.float64)

    rows = {}
    backends = [("numpy", _mlp_py)] + ([("cython", _fastmlp)] if _fastmlp else [])
    for name, impl in backends:
        fwd = time_call(lambda: impl.forward_batch(net.weights, net.biases, x), repeats)

        def train_step():
            cache = impl.forward_cache(net.weights, net.biases, x)
            impl.backward_from_cache(net.weights, cache, d_out)

        full = time_call(train_step, repeats)
        rows[name] = (fwd, full)
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if _fastmlp is None:
        print("compiled backend not built; showing numpy only")

    cases = [
        ("Q-net fwd (match round)", (14, 128, 128, 128, 128, 58), 1500, np.float32),
        ("Q-net fwd (small round)", (14, 64, 64, 64, 64, 58), 256, np.float32),
        ("Q-net train batch", (14, 128, 128, 128, 128, 58), 1024, np.float32),
        ("Q-net train batch small", (14, 64, 64, 64, 64, 58), 256, np.float32),
        ("Guider single-state tile", (15, 64, 64, 64, 64, 1), 58, np.float32),
        ("Guider eval f64", (15, 64, 64, 64, 64, 1), 58, np.float64),
    ]
    header = f"{'case':28s} {'batch':>6s} {'numpy fwd':>11s} {'cy fwd':>11s} {'numpy f+b':>11s} {'cy f+b':>11s} {'fwd x':>6s}"
    print(header)
    print("-" * len(header))
    for label, dims, batch, dtype in cases:
        rows = bench(dims, batch, dtype, args.repeats)
        np_fwd, np_full = rows["numpy"]
        if "cython" in rows:
            cy_fwd, cy_full = rows["cython"]
            speedup = np_fwd / cy_fwd
            print(
                f"{label:28s} {batch:6d} {np_fwd * 1e6:9.1f}us {cy_fwd * 1e6:9.1f}us "
                f"{np_full * 1e6:9.1f}us {cy_full * 1e6:9.1f}us {speedup:5.2f}x"
            )
        else:
            print(f"{label:28s} {batch:6d} {np_fwd * 1e6:9.1f}us {'-':>11s} {np_full * 1e6:9.1f}us")


if __name__ == "__main__":
    main()
