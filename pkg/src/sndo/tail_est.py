"""Linear sketch bracketing the l2 tail mass of a stored vector.

Each of m repetitions keeps one counter summing g_{j,t} x_j over a sparse
Bernoulli(1/(100k)) subset of coordinates; the median of the squared counters
sits between ||x_tail(C0 k)||^2/(10k) and ||x_tail(k)||^2/k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _random

__all__ = ["TailSketch", "tail_init", "tail_update", "tail_subtract", "tail_query", "tail_weights"]


def tail_weights(bern_key, gauss_key, coords: np.ndarray, m: int, k: int) -> np.ndarray:
    """delta_{j,t} * g_{j,t} for each coordinate (rows) and rep (columns)."""
    bk = np.asarray(bern_key, dtype=np.uint64)[..., None]
    gk = np.asarray(gauss_key, dtype=np.uint64)[..., None]
    pos = np.asarray(coords, dtype=np.uint64)[..., None] * np.uint64(m) + np.arange(m, dtype=np.uint64)
    keep = _random.uniform(bk, pos) < 1.0 / (100.0 * k)
    return np.where(keep, _random.normal(gk, pos), 0.0)


@dataclass(eq=False)
class TailSketch:
    n_slots: int
    k: int
    C0: float
    delta: float
    seed: int
    m: int
    y: np.ndarray
    bern_key: int
    gauss_key: int

    @classmethod
    def create(cls, n_slots: int, k: int, C0: float, delta: float, seed: int, *, c_t: float = 6.0) -> "TailSketch":
        if C0 < 1000:
            raise ValueError("C0 must be at least 1000")
        if k < 1 or n_slots < 1:
            raise ValueError("k and n_slots must be positive")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        m = max(1, math.ceil(c_t * math.log(n_slots / delta)))
        return cls(n_slots, k, C0, delta, seed, m, np.zeros((n_slots, m)),
                   _random.derive_key(seed, "tail-bern"), _random.derive_key(seed, "tail-gauss"))

    def _check_slot(self, *slots: int) -> None:
        for s in slots:
            if not 0 <= s < self.n_slots:
                raise IndexError(f"slot {s} out of range")

    def weights(self, coords: np.ndarray) -> np.ndarray:
        return tail_weights(self.bern_key, self.gauss_key, coords, self.m, self.k)

    def update(self, slot: int, j: int, z: float) -> None:
        self._check_slot(slot)
        if j < 0:
            raise IndexError("negative coordinate")
        self.y[slot] += self.weights(np.array([j]))[0] * z

    def encode(self, slot: int, v) -> None:
        self._check_slot(slot)
        v = np.asarray(v, dtype=np.float64)
        nz = np.flatnonzero(v)
        if nz.size:
            self.y[slot] += v[nz] @ self.weights(nz)

    def subtract(self, dst: int, a: int, b: int) -> None:
        self._check_slot(dst, a, b)
        self.y[dst] = self.y[a] - self.y[b]

    def query(self, slot: int) -> float:
        self._check_slot(slot)
        return float(np.median(self.y[slot] ** 2))


def tail_init(n_slots, k, C0, delta, seed, **kw) -> TailSketch:
    return TailSketch.create(n_slots, k, C0, delta, seed, **kw)


def tail_update(sk: TailSketch, slot: int, j: int, z: float) -> None:
    sk.update(slot, j, z)


def tail_subtract(sk: TailSketch, dst: int, a: int, b: int) -> None:
    sk.subtract(dst, a, b)


def tail_query(sk: TailSketch, slot: int) -> float:
    return sk.query(slot)
