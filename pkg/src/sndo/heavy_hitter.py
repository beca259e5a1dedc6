"""Batch heavy-hitter sketch: one block-mass sketch per dyadic level plus a tail sketch.

Decoding walks the dyadic tree from the root, keeping blocks whose estimated
mass clears (3/4) eps^2 times the tail estimate and at most ceil(c_cap/eps^2)
blocks per level (strongest first). Surviving leaves are the candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .norm_est import FpEstSketch
from .tail_est import TailSketch
from . import _random

__all__ = [
    "HHBank",
    "HeavyHitterSet",
    "THRESHOLD_FLOOR",
    "hh_init",
    "hh_encode_single",
    "hh_encode",
    "hh_subtract",
    "hh_decode",
    "level_delta",
    "decode_threshold",
    "keep_strongest",
    "descend_dense",
]

THRESHOLD_FLOOR = 1e-300
PHI = 1.0 / 7.0


def level_delta(eps_hh: float, delta: float, d: int) -> float:
    return eps_hh * delta / (12 * math.log2(d) + 1)


def decode_threshold(eps_hh: float, k: int, tail_value) -> np.ndarray:
    """(3/4) eps^2 EstNorm with EstNorm = k * tail estimate, floored."""
    return np.maximum(0.75 * eps_hh**2 * k * np.asarray(tail_value, dtype=np.float64), THRESHOLD_FLOOR)


@dataclass
class HeavyHitterSet:
    indices: np.ndarray
    magnitudes: np.ndarray | None = None
    overflow: bool = False
    threshold: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __contains__(self, j) -> bool:
        return bool(np.any(self.indices == j))


def keep_strongest(idx: np.ndarray, est: np.ndarray, cap: int) -> np.ndarray:
    """The `cap` largest estimates, ties to the lower index; returned in index order."""
    if idx.size <= cap:
        return idx
    order = np.lexsort((idx, -est))[:cap]
    return np.sort(idx[order])


@dataclass(eq=False)
class HHBank:
    eps_hh: float
    n_slots: int
    dim: int
    delta: float
    delta_prime: float
    seed: int
    cap: int
    levels: list[FpEstSketch]
    tail: TailSketch

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @classmethod
    def create(cls, eps_hh: float, n_slots: int, d: int, delta: float, seed: int, *,
               c_T: float = 4.0, c_m: float = 8.0, c_t: float = 6.0, c_cap: float = 8.0,
               C0: float = 1000.0) -> "HHBank":
        if not 0 < eps_hh < 1:
            raise ValueError("eps_hh must lie in (0, 1)")
        if d < 2 or d & (d - 1):
            raise ValueError("d must be a power of two (pad the input)")
        L = d.bit_length() - 1
        dp = level_delta(eps_hh, delta, d)
        levels = [
            FpEstSketch.create(n_slots, d, lv, PHI, eps_hh**2, dp, _random.derive_key(seed, "level", lv),
                               c_T=c_T, c_m=c_m)
            for lv in range(L + 1)
        ]
        tail = TailSketch.create(n_slots, math.ceil(1.0 / eps_hh**2 - 1e-12), C0, delta,
                                 _random.derive_key(seed, "tail"), c_t=c_t)
        cap = math.ceil(c_cap / eps_hh**2 - 1e-9)
        return cls(eps_hh, n_slots, d, delta, dp, seed, cap, levels, tail)

    def encode_single(self, slot: int, j: int, z: float) -> None:
        if not 0 <= j < self.dim:
            raise IndexError(f"coordinate {j} out of range")
        for sk in self.levels:
            sk.update(slot, j, z)
        self.tail.update(slot, j, z)

    def encode(self, slot: int, v) -> None:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError("dimension mismatch")
        for sk in self.levels:
            sk.encode(slot, v)
        self.tail.encode(slot, v)

    def subtract(self, dst: int, a: int, b: int) -> None:
        for sk in self.levels:
            sk.subtract(dst, a, b)
        self.tail.subtract(dst, a, b)

    def threshold(self, slot: int) -> float:
        return float(decode_threshold(self.eps_hh, self.tail.k, self.tail.query(slot)))

    def decode(self, slot: int) -> HeavyHitterSet:
        """Dyadic descent over the children of surviving blocks only."""
        thr = self.threshold(slot)
        alive = np.zeros(1, dtype=np.int64)
        overflow = False
        for lv, sk in enumerate(self.levels):
            est = sk.query_blocks(slot, alive)
            keep = est >= thr
            alive, est = alive[keep], est[keep]
            if alive.size > self.cap:
                overflow = True
                alive = keep_strongest(alive, est, self.cap)
            if lv < self.L:
                alive = np.stack([2 * alive, 2 * alive + 1], axis=1).ravel()
        return HeavyHitterSet(np.sort(alive), overflow=overflow, threshold=thr)


def descend_dense(level_est: list[np.ndarray], thr: np.ndarray, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched descent over precomputed estimates of every block.

    level_est[l] has shape (B, 2^l). Returns the leaf survivor mask (B, 2^L)
    and per-row overflow flags; identical to `HHBank.decode` row by row.
    """
    B = level_est[0].shape[0]
    alive = np.ones((B, 1), dtype=bool)
    overflow = np.zeros(B, dtype=bool)
    thr = np.asarray(thr, dtype=np.float64)[:, None]
    for lv, est in enumerate(level_est):
        if lv > 0:
            alive = np.repeat(alive, 2, axis=1)
        alive &= est >= thr
        over = np.flatnonzero(alive.sum(axis=1) > cap)
        if over.size:
            overflow[over] = True
            sub = np.where(alive[over], est[over], -np.inf)
            # stable sort on -est keeps lower indices first among ties
            order = np.argsort(-sub, axis=1, kind="stable")[:, :cap]
            keep = np.zeros_like(alive[over])
            np.put_along_axis(keep, order, True, axis=1)
            alive[over] = keep & alive[over]
    return alive, overflow


def hh_init(eps_hh, n_slots, d, delta, seed, **kw) -> HHBank:
    return HHBank.create(eps_hh, n_slots, d, delta, seed, **kw)


def hh_encode_single(bank: HHBank, slot: int, j: int, z: float) -> None:
    bank.encode_single(slot, j, z)


def hh_encode(bank: HHBank, slot: int, v) -> None:
    bank.encode(slot, v)


def hh_subtract(bank: HHBank, dst: int, a: int, b: int) -> None:
    bank.subtract(dst, a, b)


def hh_decode(bank: HHBank, slot: int, eps_hh: float | None = None) -> HeavyHitterSet:
    if eps_hh is not None and eps_hh != bank.eps_hh:
        raise ValueError("decode eps must match the bank's eps_hh")
    return bank.decode(slot)
