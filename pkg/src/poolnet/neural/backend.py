"""Kernel backend selection: compiled extension when importable, numpy otherwise.

Set ``POOLNET_BACKEND=python|cython`` to force a backend; ``cython`` raises if
the extension is missing. Only the forward kernels come from the extension:
its fused bias/ReLU loops cut large-batch forwards ~2.5x, while the backward
pass is pure BLAS either way and numpy's transposed-view dgemm orientation
benchmarks faster (see benchmarks/bench_backends.py).
"""

from __future__ import annotations

import os

from . import _mlp_py

impl = _mlp_py
name = "python"

_requested = os.environ.get("POOLNET_BACKEND", "auto").lower()
if _requested in ("auto", "cython"):
    try:
        from . import _fastmlp  # type: ignore[attr-defined]

        impl = _fastmlp
        name = "cython"
    except ImportError:
        if _requested == "cython":
            raise
elif _requested != "python":
    raise ValueError(f"unknown POOLNET_BACKEND={_requested!r}")

forward_batch = impl.forward_batch
forward_cache = impl.forward_cache
backward_from_cache = _mlp_py.backward_from_cache
