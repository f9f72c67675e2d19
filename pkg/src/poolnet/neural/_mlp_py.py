"""Pure-numpy dense MLP kernels (the fallback backend).

All kernels take explicit weight/bias lists so the compiled backend can expose
the same signatures. Gradient reductions accumulate in float64 regardless of
the parameter dtype.
"""

from __future__ import annotations

import numpy as np


def forward_batch(ws: list[np.ndarray], bs: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(ws[:-1], bs[:-1]):
        h = np.maximum(h @ w.T + b, 0)
    return h @ ws[-1].T + bs[-1]


def forward_cache(
    ws: list[np.ndarray], bs: list[np.ndarray], x: np.ndarray
) -> list[np.ndarray]:
    """Activations per layer: [input, hidden_1, ..., hidden_{L-1}, linear output]."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        h = h @ w.T + b
        if i < len(ws) - 1:
            h = np.maximum(h, 0)
        acts.append(h)
    return acts


def backward_from_cache(
    ws: list[np.ndarray], acts: list[np.ndarray], d_out: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backpropagate dL/d(output) through the cached activations."""
    dtype = ws[0].dtype
    delta = d_out.astype(np.float64, copy=False)
    grads_w: list[np.ndarray] = []
    grads_b: list[np.ndarray] = []
    for i in reversed(range(len(ws))):
        a = acts[i].astype(np.float64, copy=False)
        grads_w.append((delta.T @ a).astype(dtype))
        grads_b.append(delta.sum(axis=0).astype(dtype))
        if i > 0:
            delta = (delta @ ws[i].astype(np.float64, copy=False)) * (acts[i] > 0)
    grads_w.reverse()
    grads_b.reverse()
    return grads_w, grads_b
