"""Transition datasets: the on-disk CSV format, in-memory batches and the replay ring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import STATE_DIM, Experience
from .errors import ContractError

CSV_COLUMNS = (
    [f"s{i}" for i in range(STATE_DIM)]
    + ["a", "r"]
    + [f"sp{i}" for i in range(STATE_DIM)]
    + ["done"]
)


@dataclass
class TransitionDataset:
    """Column-major batch of (s, a, r, s', done) rows."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.a)
        if not (
            self.s.shape == (n, STATE_DIM)
            and self.s_next.shape == (n, STATE_DIM)
            and self.r.shape == (n,)
            and self.done.shape == (n,)
        ):
            raise ContractError("transition arrays have inconsistent shapes")

    def __len__(self) -> int:
        return len(self.a)

    @classmethod
    def empty(cls) -> "TransitionDataset":
        return cls(
            s=np.zeros((0, STATE_DIM)),
            a=np.zeros(0, dtype=np.int64),
            r=np.zeros(0),
            s_next=np.zeros((0, STATE_DIM)),
            done=np.zeros(0, dtype=bool),
        )

    @classmethod
    def from_experiences(cls, experiences: list[Experience]) -> "TransitionDataset":
        if not experiences:
            return cls.empty()
        return cls(
            s=np.stack([e.s for e in experiences]).astype(np.float64),
            a=np.array([e.a for e in experiences], dtype=np.int64),
            r=np.array([e.r for e in experiences], dtype=np.float64),
            s_next=np.stack([e.s_next for e in experiences]).astype(np.float64),
            done=np.array([e.done for e in experiences], dtype=bool),
        )

    def take(self, idx: np.ndarray) -> "TransitionDataset":
        return TransitionDataset(
            s=self.s[idx], a=self.a[idx], r=self.r[idx], s_next=self.s_next[idx], done=self.done[idx]
        )

    def concat(self, other: "TransitionDataset") -> "TransitionDataset":
        return TransitionDataset(
            s=np.concatenate([self.s, other.s]),
            a=np.concatenate([self.a, other.a]),
            r=np.concatenate([self.r, other.r]),
            s_next=np.concatenate([self.s_next, other.s_next]),
            done=np.concatenate([self.done, other.done]),
        )

    def shuffled(self, seed: int) -> "TransitionDataset":
        perm = np.random.default_rng(seed).permutation(len(self))
        return self.take(perm)

    def split(self, held_out_frac: float, seed: int) -> tuple["TransitionDataset", "TransitionDataset"]:
        perm = np.random.default_rng(seed).permutation(len(self))
        k = int(round(len(self) * held_out_frac))
        return self.take(perm[k:]), self.take(perm[:k])

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(len(self)):
                row = (
                    [repr(float(v)) for v in self.s[i]]
                    + [str(int(self.a[i])), repr(float(self.r[i]))]
                    + [repr(float(v)) for v in self.s_next[i]]
                    + [str(int(self.done[i]))]
                )
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "TransitionDataset":
        with open(path, newline="") as fh:
            header = fh.readline().strip()
            if header.split(",") != CSV_COLUMNS:
                raise ContractError(f"{path}: unexpected dataset header")
            body = fh.read().strip()
        if not body:
            return cls.empty()
        try:
            raw = np.array(
                [[float(tok) for tok in line.split(",")] for line in body.splitlines()]
            )
        except ValueError as exc:
            raise ContractError(f"{path}: malformed dataset row: {exc}") from exc
        if raw.ndim != 2 or raw.shape[1] != len(CSV_COLUMNS):
            raise ContractError(f"{path}: expected {len(CSV_COLUMNS)} columns")
        d = STATE_DIM
        return cls(
            s=raw[:, :d],
            a=raw[:, d].astype(np.int64),
            r=raw[:, d + 1],
            s_next=raw[:, d + 2 : 2 * d + 2],
            done=raw[:, 2 * d + 2].astype(bool),
        )


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling.

    ``pinned`` rows (e.g. a preloaded offline batch) are sampled alongside the
    ring but never evicted; the capacity bound applies to the ring only.
    """

    def __init__(self, capacity: int, pinned: TransitionDataset | None = None):
        if capacity < 1:
            raise ContractError("capacity must be positive")
        self.capacity = capacity
        self.pinned = pinned if pinned is not None and len(pinned) else None
        self._s = np.zeros((capacity, STATE_DIM))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._sn = np.zeros((capacity, STATE_DIM))
        self._done = np.zeros(capacity, dtype=bool)
        self._size = 0
        self._next = 0

    @property
    def size(self) -> int:
        """Rows in the ring (the capacity-bounded part)."""
        return self._size

    @property
    def total_size(self) -> int:
        return self._size + (len(self.pinned) if self.pinned is not None else 0)

    def push(self, exp: Experience) -> None:
        i = self._next
        self._s[i] = exp.s
        self._a[i] = exp.a
        self._r[i] = exp.r
        self._sn[i] = exp.s_next
        self._done[i] = exp.done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, m: int, rng: np.random.Generator) -> TransitionDataset:
        total = self.total_size
        if total == 0:
            raise ContractError("cannot sample from an empty buffer")
        idx = rng.integers(0, total, size=m)
        n_pinned = len(self.pinned) if self.pinned is not None else 0
        from_pinned = idx < n_pinned
        ring_idx = idx[~from_pinned] - n_pinned
        parts = []
        if from_pinned.any():
            parts.append(self.pinned.take(idx[from_pinned]))
        if ring_idx.size:
            parts.append(
                TransitionDataset(
                    s=self._s[ring_idx],
                    a=self._a[ring_idx],
                    r=self._r[ring_idx],
                    s_next=self._sn[ring_idx],
                    done=self._done[ring_idx],
                )
            )
        batch = parts[0]
        for extra in parts[1:]:
            batch = batch.concat(extra)
        return batch
