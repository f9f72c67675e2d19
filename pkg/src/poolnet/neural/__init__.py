"""Minimal dense neural-network engine.

Rectified hidden layers, linear output; analytic MSE backprop with optional
per-sample output masking; Adam; Polyak soft updates; bit-exact checkpoints.
Hot kernels live in a compiled extension with a numpy fallback (see
:mod:`poolnet.neural.backend`).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError
from . import backend

BACKEND_NAME = backend.name

_MAGIC = b"PNCK"
_VERSION = 1
_DTYPE_CODES = {1: np.float32, 2: np.float64}


class Mlp:
    """Dense feed-forward network; weights[i] has shape (dims[i+1], dims[i])."""

    __slots__ = ("dims", "weights", "biases")

    def __init__(self, dims: tuple[int, ...], weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise ValueError("parameter count disagrees with layer dims")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i}: parameter shape mismatch")
        self.dims = tuple(dims)
        self.weights = weights
        self.biases = biases

    @classmethod
    def create(cls, dims: tuple[int, ...] | list[int], seed: int = 0, dtype=np.float32) -> "Mlp":
        """Seeded rectifier-scaled Gaussian init (std sqrt(2/fan_in)), zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / fan_in)
            weights.append((rng.standard_normal((fan_out, fan_in)) * scale).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(tuple(dims), weights, biases)

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def forward_batch(net: Mlp, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"expected batch of {net.in_dim}-vectors, got {x.shape}")
    return backend.forward_batch(net.weights, net.biases, x.astype(net.dtype, copy=False))


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    if x.ndim != 1 or x.shape[0] != net.in_dim:
        raise ValueError(f"expected a {net.in_dim}-vector, got shape {x.shape}")
    return forward_batch(net, x[None, :])[0]


def forward_with_cache(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    return backend.forward_cache(net.weights, net.biases, x.astype(net.dtype, copy=False))


def backward_from_output_grad(
    net: Mlp, cache: list[np.ndarray], d_out: np.ndarray
) -> list[np.ndarray]:
    """Parameter gradients given dL/d(output); interleaved [dW0, db0, dW1, ...]."""
    grads_w, grads_b = backend.backward_from_cache(net.weights, cache, d_out)
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.append(gw)
        out.append(gb)
    return out


def backward_mse(
    net: Mlp,
    x: np.ndarray,
    targets: np.ndarray | None = None,
    *,
    action_index: np.ndarray | None = None,
    action_target: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Loss and exact gradients of the mean-squared error over a batch.

    Either a full target matrix is given, or (``action_index``, ``action_target``)
    masks the error to one output per sample; gradients then flow only through
    the indexed outputs. The loss is averaged over the batch and summed over
    output components, so the masked form equals a full-target batch whose
    other entries match the predictions.
    """
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    cache = forward_with_cache(net, x)
    y = cache[-1].astype(np.float64)
    n = x.shape[0]
    d_out = np.zeros_like(y)
    if targets is not None:
        err = y - targets
        loss = float(np.sum(err * err) / n)
        d_out = 2.0 * err / n
    else:
        if action_index is None or action_target is None:
            raise ValueError("need either targets or (action_index, action_target)")
        rows = np.arange(n)
        err = y[rows, action_index] - action_target
        loss = float(np.sum(err * err) / n)
        d_out[rows, action_index] = 2.0 * err / n
    return loss, backward_from_output_grad(net, cache, d_out)


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float, **kw) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
            **kw,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update; moments are kept in float64."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("parameter/gradient/state lengths disagree")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g64 = g.astype(np.float64, copy=False)
        m *= b1
        m += (1.0 - b1) * g64
        v *= b2
        v += (1.0 - b2) * g64 * g64
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= update.astype(p.dtype)


def polyak_update(target: Mlp, train: Mlp, rho: float) -> None:
    """Soft copy train params into the target: theta_t <- rho*theta + (1-rho)*theta_t."""
    if target.dims != train.dims:
        raise ValueError("networks must share layer dims")
    for t, w in zip(target.parameters(), train.parameters()):
        t[...] = rho * w + (1.0 - rho) * t


def save_checkpoint(net: Mlp, path: str) -> None:
    """Versioned header (magic, version, dtype, dims) then raw little-endian arrays."""
    code = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}[np.dtype(net.dtype)]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IBI", _VERSION, code, len(net.dims)))
        fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
        for p in net.parameters():
            fh.write(np.ascontiguousarray(p).astype(f"<{p.dtype.kind}{p.dtype.itemsize}").tobytes())


def load_checkpoint(path: str) -> Mlp:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a network checkpoint")
    version, code, n_dims = struct.unpack_from("<IBI", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {_VERSION}")
    if code not in _DTYPE_CODES:
        raise CheckpointError(f"{path}: unknown dtype code {code}")
    dtype = np.dtype(_DTYPE_CODES[code]).newbyteorder("<")
    offset = 4 + struct.calcsize("<IBI")
    dims = struct.unpack_from(f"<{n_dims}I", blob, offset)
    offset += 4 * n_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(blob, dtype=dtype, count=fan_in * fan_out, offset=offset)
        offset += w.nbytes
        b = np.frombuffer(blob, dtype=dtype, count=fan_out, offset=offset)
        offset += b.nbytes
        weights.append(w.reshape(fan_out, fan_in).astype(dtype.newbyteorder("=")))
        biases.append(b.astype(dtype.newbyteorder("=")))
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return Mlp(dims, weights, biases)
