"""Gaussian sketch estimating the squared l2 mass of dyadic blocks (FpEst).

At level `l` the d coordinates split into 2^l equal blocks. Each of T
repetitions hashes blocks into buckets and keeps m Gaussian projections per
bucket. The estimate for a block is the median over repetitions of the
squared, rescaled median absolute counter of its bucket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _random

__all__ = [
    "MEDIAN_ABS_NORMAL",
    "FpEstSketch",
    "fp_init",
    "fp_update",
    "fp_subtract",
    "fp_query",
    "fp_shape",
    "block_ids",
    "bucket_table",
    "coordinate_gaussians",
    "bucket_values",
]

# median of |N(0,1)| = Phi^{-1}(3/4)
MEDIAN_ABS_NORMAL = 0.6744897501960817


def fp_shape(n_slots: int, delta: float, phi: float, eps_fp: float, c_T: float, c_m: float) -> tuple[int, int, int]:
    """(T, m, R_est) for the given accuracy parameters."""
    T = max(1, math.ceil(c_T * math.log(n_slots / delta)))
    m = max(1, math.ceil(c_m / phi**2 - 1e-9))
    return T, m, math.ceil(1.0 / eps_fp - 1e-9)


def block_ids(j: np.ndarray, dim: int, level: int) -> np.ndarray:
    return (np.asarray(j, dtype=np.int64) << level) // dim


def bucket_table(hash_key, level: int, T: int, n_buckets: int) -> np.ndarray:
    """h_t(xi) for all t < T and blocks xi < 2^level, shape (..., T, 2^level).

    With no more blocks than buckets the map is the identity, which is
    collision free; otherwise buckets are drawn uniformly per (t, xi).
    `hash_key` may be an array of keys, giving a leading batch axis.
    """
    nb = 1 << level
    key = np.asarray(hash_key, dtype=np.uint64)
    shape = key.shape + (T, nb)
    if nb <= n_buckets:
        return np.broadcast_to(np.arange(nb, dtype=np.int64), shape).copy()
    pos = np.arange(T * nb, dtype=np.uint64).reshape(T, nb)
    return _random.below(key[..., None, None], pos, n_buckets)


def coordinate_gaussians(gauss_key, coords: np.ndarray, T: int, m: int) -> np.ndarray:
    """g[j, t, zeta] keyed by (coordinate, rep, counter); shape (..., len, T, m)."""
    key = np.asarray(gauss_key, dtype=np.uint64)
    c = np.asarray(coords, dtype=np.uint64)
    pos = (c[..., None, None] * np.uint64(T) + np.arange(T, dtype=np.uint64)[:, None]) * np.uint64(m)
    pos = pos + np.arange(m, dtype=np.uint64)
    return _random.normal(key[..., None, None], pos)


def bucket_values(counters: np.ndarray) -> np.ndarray:
    """(median |counter| / median|N(0,1)|)^2 over the last axis."""
    med = np.median(np.abs(counters), axis=-1)
    return (med / MEDIAN_ABS_NORMAL) ** 2


@dataclass(eq=False)
class FpEstSketch:
    n_slots: int
    dim: int
    level: int
    phi: float
    eps_fp: float
    delta: float
    seed: int
    T: int
    m: int
    R_est: int
    n_buckets: int
    counters: np.ndarray
    hash_key: int
    gauss_key: int
    table: np.ndarray

    @classmethod
    def create(cls, n_slots: int, d: int, level: int, phi: float, eps_fp: float, delta: float,
               seed: int, *, c_T: float = 4.0, c_m: float = 8.0) -> "FpEstSketch":
        if not 0 < phi < 1:
            raise ValueError("phi must lie in (0, 1)")
        if not 0 < eps_fp < 1:
            raise ValueError("eps_fp must lie in (0, 1)")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if n_slots < 1 or d < 1:
            raise ValueError("n_slots and d must be positive")
        if level < 0 or (1 << level) > d:
            raise ValueError("level must satisfy 2^level <= d")
        T, m, R_est = fp_shape(n_slots, delta, phi, eps_fp, c_T, c_m)
        n_buckets = min(R_est, 1 << level)
        hash_key = _random.derive_key(seed, "fp-hash")
        gauss_key = _random.derive_key(seed, "fp-gauss")
        return cls(
            n_slots, d, level, phi, eps_fp, delta, seed, T, m, R_est, n_buckets,
            np.zeros((n_slots, T, n_buckets, m)), hash_key, gauss_key,
            bucket_table(hash_key, level, T, n_buckets),
        )

    def _check_slot(self, *slots: int) -> None:
        for s in slots:
            if not 0 <= s < self.n_slots:
                raise IndexError(f"slot {s} out of range")

    def contributions(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bucket index (len, T) and Gaussians (len, T, m) for the given coordinates."""
        xi = block_ids(coords, self.dim, self.level)
        rows = np.arange(self.T)[None, :]
        return self.table[rows, xi[:, None]], coordinate_gaussians(self.gauss_key, coords, self.T, self.m)

    def update(self, slot: int, j: int, z: float) -> None:
        self._check_slot(slot)
        if not 0 <= j < self.dim:
            raise IndexError(f"coordinate {j} out of range")
        b, g = self.contributions(np.array([j]))
        self.counters[slot, np.arange(self.T), b[0]] += g[0] * z

    def encode(self, slot: int, v) -> None:
        """Add v to the stored vector in `slot`."""
        self._check_slot(slot)
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError("dimension mismatch")
        nz = np.flatnonzero(v)
        if nz.size == 0:
            return
        b, g = self.contributions(nz)
        flat = (np.arange(self.T)[None, :] * self.n_buckets + b)[..., None] * self.m + np.arange(self.m)
        w = g * v[nz, None, None]
        size = self.T * self.n_buckets * self.m
        self.counters[slot] += np.bincount(flat.ravel(), w.ravel(), size).reshape(self.counters.shape[1:])

    def subtract(self, dst: int, a: int, b: int) -> None:
        self._check_slot(dst, a, b)
        self.counters[dst] = self.counters[a] - self.counters[b]

    def query(self, slot: int, xi: int) -> float:
        self._check_slot(slot)
        if not 0 <= xi < (1 << self.level):
            raise IndexError(f"block {xi} out of range")
        return float(self.query_blocks(slot, np.array([xi]))[0])

    def query_blocks(self, slot: int, xis: np.ndarray) -> np.ndarray:
        """Estimates for several blocks of one slot."""
        vals = bucket_values(self.counters[slot])  # (T, n_buckets)
        per_rep = vals[np.arange(self.T)[:, None], self.table[:, xis]]
        return np.median(per_rep, axis=0)


def fp_init(n_slots, d, level, phi, eps_fp, delta, seed, **kw) -> FpEstSketch:
    return FpEstSketch.create(n_slots, d, level, phi, eps_fp, delta, seed, **kw)


def fp_update(sk: FpEstSketch, slot: int, j: int, z: float) -> None:
    sk.update(slot, j, z)


def fp_subtract(sk: FpEstSketch, dst: int, a: int, b: int) -> None:
    sk.subtract(dst, a, b)


def fp_query(sk: FpEstSketch, slot: int, xi: int) -> float:
    return sk.query(slot, xi)
