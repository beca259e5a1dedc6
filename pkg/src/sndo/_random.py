"""Counter-keyed pseudorandom streams.

Every random quantity in the package is a pure function of a 64-bit key and
an integer position, so values can be regenerated for any coordinate without
storing them. The mixer is the splitmix64 finalizer.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / (1 << 53)


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _M1
        x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def _mix_int(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_key(seed: int, *labels: int | str) -> int:
    """Fold labels into a seed, giving an independent-looking 64-bit key."""
    h = _mix_int(int(seed) + 0x9E3779B97F4A7C15)
    for lab in labels:
        if isinstance(lab, str):
            raw_bytes = lab.encode()
            # fold 8-byte chunks so long labels stay distinct
            lab = len(raw_bytes)
            for i in range(0, len(raw_bytes), 8):
                lab = _mix_int(lab ^ int.from_bytes(raw_bytes[i:i + 8], "little"))
        h = _mix_int(h ^ _mix_int(int(lab) + 0x632BE59BD9B4E019))
    return h


def raw(key, positions) -> np.ndarray:
    """Raw 64-bit outputs of stream `key` at `positions` (broadcasting)."""
    pos = np.asarray(positions, dtype=np.uint64)
    k = np.asarray(key, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(k + (pos + np.uint64(1)) * _GOLDEN)


def uniform(key, positions) -> np.ndarray:
    """Uniforms in the open interval (0, 1)."""
    z = raw(key, positions) >> _S11
    return (z.astype(np.float64) + 0.5) * _INV53


def normal(key, positions) -> np.ndarray:
    """Standard normals via the inverse CDF of `uniform`."""
    return ndtri(uniform(key, positions))


def below(key, positions, n: int) -> np.ndarray:
    """Integers uniform on [0, n)."""
    u = uniform(key, positions)
    out = (u * n).astype(np.int64)
    return np.minimum(out, n - 1)
