"""Symmetric norms, layer profiles and the layer-vector evaluator.

Every built-in norm is evaluated through a run-length kernel that sees only
distinct magnitudes and their multiplicities. `eval_norm` compresses a dense
vector into runs first, so a dense vector and its layer vector are evaluated
by exactly the same arithmetic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "SymNorm",
    "LpNorm",
    "TopKNorm",
    "KSupportNorm",
    "BoxNorm",
    "MaxMixNorm",
    "SumMixNorm",
    "OrliczNorm",
    "CustomNorm",
    "parse_norm",
    "eval_norm",
    "LayerProfile",
    "LayerClampWarning",
    "layer_exponents",
    "layer_profile_exact",
    "layer_vector_norm",
    "round_counts",
    "MmcProvenance",
    "MmcBound",
    "mmc_bound",
    "estimate_median",
    "heuristic_mc",
    "heuristic_mmc",
]


def _as_runs(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.abs(np.asarray(v, dtype=np.float64))
    a = a[a > 0]
    if a.size == 0:
        return np.empty(0), np.empty(0)
    vals, cnts = np.unique(a, return_counts=True)
    return vals, cnts.astype(np.float64)


class SymNorm:
    """Base class. Subclasses implement `_runs(values, counts, dim)`."""

    dim: int | None = None

    def _runs(self, values: np.ndarray, counts: np.ndarray, dim: int) -> float:
        raise NotImplementedError

    def check_dim(self, dim: int) -> None:
        if self.dim is not None and dim != self.dim:
            raise ValueError(f"dimension mismatch: norm expects {self.dim}, got {dim}")

    def from_runs(self, values, counts, dim: int) -> float:
        """Norm of a vector given as (magnitude, multiplicity) runs padded with zeros to `dim`."""
        values = np.asarray(values, dtype=np.float64)
        counts = np.asarray(counts, dtype=np.float64)
        keep = (values > 0) & (counts > 0)
        values, counts = values[keep], counts[keep]
        if counts.sum() > dim:
            raise ValueError("run counts exceed the dimension")
        if values.size == 0:
            return 0.0
        return float(self._runs(values, counts, dim))

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("expected a 1-d vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite input")
        self.check_dim(v.size)
        vals, cnts = _as_runs(v)
        if vals.size == 0:
            return 0.0
        return float(self._runs(vals, cnts, v.size))

    @property
    def descriptor(self) -> str:
        raise NotImplementedError


def _sorted_desc(values: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-values, kind="stable")
    return values[order], counts[order]


def _expand_top(values: np.ndarray, counts: np.ndarray, k: int) -> np.ndarray:
    """The k largest entries (zero padded) of a run-length vector, descending."""
    vals, cnts = _sorted_desc(values, counts)
    cum = np.cumsum(cnts)
    take = np.clip(k - (cum - cnts), 0, cnts).astype(np.int64)
    top = np.repeat(vals, take)
    if top.size < k:
        top = np.concatenate([top, np.zeros(k - top.size)])
    return top


@dataclass(frozen=True)
class LpNorm(SymNorm):
    p: float
    dim: int | None = None

    def __post_init__(self):
        if not (self.p >= 1):
            raise ValueError("lp norm requires p >= 1")

    def _runs(self, values, counts, dim):
        p = self.p
        if math.isinf(p):
            return values.max()
        if p == 1:
            return float(np.dot(counts, values))
        top = values.max()
        s = np.dot(counts, (values / top) ** p)
        return top * s ** (1.0 / p)

    @property
    def descriptor(self) -> str:
        return "lp:inf" if math.isinf(self.p) else f"lp:{self.p!r}"


@dataclass(frozen=True)
class TopKNorm(SymNorm):
    """Sum of the k largest magnitudes."""

    k: int
    dim: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("top-k norm requires k >= 1")

    def check_dim(self, dim):
        super().check_dim(dim)
        if self.k > dim:
            raise ValueError("top-k norm requires k <= d")

    def _runs(self, values, counts, dim):
        self.check_dim(dim)
        vals, cnts = _sorted_desc(values, counts)
        cum = np.cumsum(cnts)
        take = np.clip(self.k - (cum - cnts), 0, cnts)
        return float(np.dot(take, vals))

    @property
    def descriptor(self) -> str:
        return f"topk:{self.k}"


@dataclass(frozen=True)
class KSupportNorm(SymNorm):
    """k-support norm, via the closed form of its variational definition."""

    k: int
    dim: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k-support norm requires k >= 1")

    def check_dim(self, dim):
        super().check_dim(dim)
        if self.k > dim:
            raise ValueError("k-support norm requires k <= d")

    def _runs(self, values, counts, dim):
        self.check_dim(dim)
        k = self.k
        z = _expand_top(values, counts, k)
        tail = max(float(np.dot(counts, values)) - float(z.sum()), 0.0)
        # suf[s] = z[s] + ... + z[k-1]
        suf = np.cumsum(z[::-1])[::-1]
        r = np.arange(k)
        start = k - r - 1
        tot = suf[start] + tail
        avg = tot / (r + 1)
        upper = np.where(start >= 1, z[np.maximum(start - 1, 0)], np.inf)
        ok = (upper > avg) & (avg >= z[start])
        if ok.any():
            ri = int(np.argmax(ok))
        else:  # rounding ties: pick the least violated split
            viol = np.maximum(avg - upper, 0) + np.maximum(z[start] - avg, 0)
            ri = int(np.argmin(viol))
        head = z[: k - ri - 1]
        return math.sqrt(float(np.dot(head, head)) + tot[ri] ** 2 / (ri + 1))

    @property
    def descriptor(self) -> str:
        return f"ksupport:{self.k}"


@dataclass(frozen=True)
class BoxNorm(SymNorm):
    """Box-norm: sqrt(min sum v_i^2/theta_i) over a <= theta_i <= 1, sum theta_i <= k.

    a = 0 recovers the k-support norm.
    """

    k: float
    a: float = 0.0
    dim: int | None = None

    def __post_init__(self):
        if not (self.k >= 1):
            raise ValueError("box norm requires k >= 1")
        if not (0 <= self.a < 1):
            raise ValueError("box norm requires 0 <= a < 1")

    def check_dim(self, dim):
        super().check_dim(dim)
        if self.k > dim or self.a * dim > self.k * (1 + 1e-12):
            raise ValueError("box norm requires a*d <= k <= d")

    def _theta_sum(self, s, values, counts, zeros):
        with np.errstate(over="ignore"):
            return float(np.dot(counts, np.clip(s * values, self.a, 1.0))) + zeros * self.a

    def _runs(self, values, counts, dim):
        self.check_dim(dim)
        a, k = self.a, self.k
        zeros = dim - counts.sum()
        if counts.sum() + zeros * a <= k:
            theta = np.ones_like(values)
        elif self._theta_sum(0.0, values, counts, zeros) >= k:
            theta = np.full_like(values, a)
        else:
            with np.errstate(over="ignore"):
                br = np.unique(np.concatenate([1.0 / values, a / values if a > 0 else []]))
            lo, hi = 0, br.size - 1
            # smallest breakpoint with theta-sum >= k
            if self._theta_sum(br[hi], values, counts, zeros) < k:
                raise ArithmeticError("box norm breakpoint search failed")
            while lo < hi:
                mid = (lo + hi) // 2
                if self._theta_sum(br[mid], values, counts, zeros) >= k:
                    hi = mid
                else:
                    lo = mid + 1
            s_hi = br[lo]
            s_lo = br[lo - 1] if lo > 0 else 0.0
            mid_s = 0.5 * (s_lo + s_hi)
            y = mid_s * values
            low = y <= a
            high = y >= 1.0
            free = ~(low | high)
            fixed = zeros * a + a * counts[low].sum() + counts[high].sum()
            lin = float(np.dot(counts[free], values[free]))
            s = (k - fixed) / lin if lin > 0 else s_hi
            theta = np.where(low, a, np.where(high, 1.0, s * values))
        return math.sqrt(float(np.dot(counts, values**2 / theta)))

    @property
    def descriptor(self) -> str:
        return f"box:{self.k!r}:{self.a!r}"


@dataclass(frozen=True)
class MaxMixNorm(SymNorm):
    """max(||v||_2, c ||v||_1)."""

    c: float
    dim: int | None = None

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError("mixture weight must be positive")

    def _runs(self, values, counts, dim):
        top = values.max()
        l2 = top * math.sqrt(float(np.dot(counts, (values / top) ** 2)))
        return max(l2, self.c * float(np.dot(counts, values)))

    @property
    def descriptor(self) -> str:
        return f"maxmix:{self.c!r}"


@dataclass(frozen=True)
class SumMixNorm(SymNorm):
    """||v||_2 + c ||v||_1."""

    c: float
    dim: int | None = None

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError("mixture weight must be positive")

    def _runs(self, values, counts, dim):
        top = values.max()
        l2 = top * math.sqrt(float(np.dot(counts, (values / top) ** 2)))
        return l2 + self.c * float(np.dot(counts, values))

    @property
    def descriptor(self) -> str:
        return f"summix:{self.c!r}"


@dataclass(frozen=True, eq=False)
class OrliczNorm(SymNorm):
    """Orlicz norm inf{t > 0 : sum G(|v_i|/t) <= 1}, G piecewise linear on a grid.

    The grid gets an implicit (0, 0) knot and the last slope is extended past
    the final knot. `growth` is the constant C with G(y)/G(x) <= C (y/x)^2 for
    0 < x < y; it is computed from the grid unless given.
    """

    xs: np.ndarray
    gs: np.ndarray
    growth: float | None = None
    source: str = ""
    dim: int | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        gs = np.asarray(self.gs, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != gs.shape or xs.size < 1:
            raise ValueError("Orlicz grid needs two equal-length columns")
        if xs[0] == 0 and gs[0] == 0:
            xs, gs = xs[1:], gs[1:]
        if xs.size < 1 or np.any(xs <= 0) or np.any(gs <= 0):
            raise ValueError("Orlicz grid must be positive")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(gs) <= 0):
            raise ValueError("Orlicz grid must be strictly increasing in both columns")
        kx = np.concatenate([[0.0], xs])
        kg = np.concatenate([[0.0], gs])
        slopes = np.diff(kg) / np.diff(kx)
        if np.any(np.diff(slopes) < -1e-12 * slopes[1:]):
            raise ValueError("Orlicz grid must describe a convex function")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "gs", gs)
        object.__setattr__(self, "_kx", kx)
        object.__setattr__(self, "_kg", kg)
        object.__setattr__(self, "_slopes", slopes)
        if self.growth is None:
            object.__setattr__(self, "growth", self._growth_from_grid())

    @classmethod
    def from_file(cls, path: str | Path, growth: float | None = None) -> "OrliczNorm":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape[1] != 2:
            raise ValueError("Orlicz grid file must have two comma-separated columns")
        return cls(data[:, 0], data[:, 1], growth=growth, source=str(path))

    def G(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        seg = np.clip(np.searchsorted(self._kx, y, side="right") - 1, 0, self._slopes.size - 1)
        return self._kg[seg] + self._slopes[seg] * (y - self._kx[seg])

    def _growth_from_grid(self) -> float:
        pts = [self.xs]
        kx = self._kx
        for lo, hi in zip(kx[:-1], kx[1:]):
            pts.append(np.linspace(lo, hi, 66)[1:-1])
        y = np.unique(np.concatenate(pts))
        y = y[y > 0]
        ratio = self.G(y) / y**2
        run_min = np.minimum.accumulate(ratio)
        return float(max(1.0, np.max(ratio / run_min)))

    def _segments(self, values, t):
        y = values / t
        return np.clip(np.searchsorted(self._kx, y, side="right") - 1, 0, self._slopes.size - 1)

    def _h(self, values, counts, t):
        return float(np.dot(counts, self.G(values / t)))

    def _runs(self, values, counts, dim):
        # h(t) = sum c G(v/t) is decreasing; bracket the root of h(t) = 1
        hi = values.max()
        while self._h(values, counts, hi) > 1:
            hi *= 2
        lo = hi
        while self._h(values, counts, lo) <= 1:
            lo /= 2
        seg = self._segments(values, hi)
        for _ in range(400):
            seg_lo, seg_hi = self._segments(values, lo), self._segments(values, hi)
            if np.array_equal(seg_lo, seg_hi):
                seg = seg_hi
                break
            mid = math.sqrt(lo * hi)
            if mid <= lo or mid >= hi:
                seg = seg_hi
                break
            if self._h(values, counts, mid) > 1:
                lo = mid
            else:
                hi = mid
        # on a fixed segment assignment h(t) = A + B/t, solved exactly
        A = float(np.dot(counts, self._kg[seg] - self._slopes[seg] * self._kx[seg]))
        B = float(np.dot(counts, self._slopes[seg] * values))
        return B / (1.0 - A)

    @property
    def descriptor(self) -> str:
        return f"orlicz:{self.source}"


@dataclass(frozen=True, eq=False)
class CustomNorm(SymNorm):
    """A user evaluator on dense vectors; symmetry is the caller's promise."""

    fn: Callable[[np.ndarray], float]
    mmc: float | None = None
    name: str = "custom"
    dim: int | None = None

    def _runs(self, values, counts, dim):
        dense = np.zeros(dim)
        dense[: int(counts.sum())] = np.repeat(values, counts.astype(np.int64))
        return float(self.fn(dense))

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        self.check_dim(v.size)
        return float(self.fn(v))

    @property
    def descriptor(self) -> str:
        return f"custom:{self.name}"


def parse_norm(spec: str, dim: int | None = None) -> SymNorm:
    """Parse a descriptor such as "lp:2", "topk:16", "maxmix:0.5" or "orlicz:grid.csv"."""
    kind, _, arg = spec.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "lp":
            p = math.inf if arg.lower() in ("inf", "infinity") else float(arg)
            return LpNorm(p, dim=dim)
        if kind == "topk":
            return TopKNorm(int(arg), dim=dim)
        if kind == "ksupport":
            return KSupportNorm(int(arg), dim=dim)
        if kind == "box":
            parts = arg.split(":")
            a = float(parts[1]) if len(parts) > 1 else 0.0
            return BoxNorm(float(parts[0]), a, dim=dim)
        if kind == "maxmix":
            return MaxMixNorm(float(arg), dim=dim)
        if kind == "summix":
            return SumMixNorm(float(arg), dim=dim)
        if kind == "orlicz":
            if not arg:
                raise ValueError("orlicz needs a grid file")
            norm = OrliczNorm.from_file(arg)
            return OrliczNorm(norm.xs, norm.gs, source=arg, dim=dim)
    except (TypeError, OSError) as exc:
        raise ValueError(f"bad norm descriptor {spec!r}: {exc}") from exc
    raise ValueError(f"unknown norm descriptor {spec!r}")


def eval_norm(norm: SymNorm, v) -> float:
    return norm(v)


# ---------------------------------------------------------------- layers


class LayerClampWarning(RuntimeWarning):
    """Rounded layer counts exceeded the dimension and were clamped."""


def layer_exponents(mags: np.ndarray, alpha: float) -> np.ndarray:
    """Exponent i with alpha^(i-1) < m <= alpha^i for each positive magnitude.

    Exact for normal floats; near the subnormal range the powers of alpha
    themselves round, so the boundaries are only approximate there.
    """
    m = np.asarray(mags, dtype=np.float64)
    e = np.ceil(np.log(m) / math.log(alpha)).astype(np.int64)
    for _ in range(4):
        up = np.power(alpha, e.astype(np.float64)) < m
        down = np.power(alpha, (e - 1).astype(np.float64)) >= m
        if not (up.any() or down.any()):
            break
        e = e + up - down
    return e


@dataclass(frozen=True, eq=False)
class LayerProfile:
    """Layer sizes of a vector: counts[i] coordinates at magnitude alpha^(offset+i)."""

    alpha: float
    offset: int
    counts: np.ndarray
    dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (1 < self.alpha <= 2):
            raise ValueError("alpha must lie in (1, 2]")
        c = np.asarray(self.counts, dtype=np.float64).reshape(-1)
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("layer counts must be finite and nonnegative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_dict(cls, alpha: float, counts: dict[int, float], dim: int) -> "LayerProfile":
        if not counts:
            return cls(alpha, 0, np.empty(0), dim)
        lo, hi = min(counts), max(counts)
        arr = np.zeros(hi - lo + 1)
        for e, c in counts.items():
            arr[e - lo] = c
        return cls(alpha, lo, arr, dim)

    @property
    def exponents(self) -> np.ndarray:
        return self.offset + np.arange(self.counts.size, dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.power(self.alpha, self.exponents.astype(np.float64))

    def as_dict(self) -> dict[int, float]:
        return {int(e): float(c) for e, c in zip(self.exponents, self.counts) if c}

    def materialize(self, counts: np.ndarray | None = None) -> np.ndarray:
        c = round_counts(self.counts) if counts is None else counts
        out = np.zeros(self.dim)
        vals = np.repeat(self.values, c.astype(np.int64))[::-1]
        out[: vals.size] = vals
        return out


def round_counts(counts: np.ndarray) -> np.ndarray:
    """Round to the nearest nonnegative integer (halves up)."""
    return np.maximum(np.floor(np.asarray(counts, dtype=np.float64) + 0.5), 0.0)


def clamp_counts(profile: LayerProfile) -> tuple[np.ndarray, bool]:
    """Rounded counts with the smallest layers trimmed so the total fits in d."""
    c = round_counts(profile.counts)
    excess = c.sum() - profile.dim
    if excess <= 0:
        return c, False
    for idx in range(c.size):
        cut = min(c[idx], excess)
        c[idx] -= cut
        excess -= cut
        if excess <= 0:
            break
    return c, True


def layer_profile_exact(v, alpha: float) -> LayerProfile:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    m = np.abs(v[v != 0])
    if m.size == 0:
        return LayerProfile(alpha, 0, np.empty(0), v.size)
    e = layer_exponents(m, alpha)
    lo = int(e.min())
    return LayerProfile(alpha, lo, np.bincount(e - lo).astype(np.float64), v.size)


def layer_vector_norm(norm: SymNorm, profile: LayerProfile) -> float:
    """Norm of the layer vector: alpha^i repeated round(b_i) times, zero padded."""
    counts, clamped = clamp_counts(profile)
    if clamped:
        profile.meta["clamped"] = True
        warnings.warn("rounded layer counts exceed d; smallest layers trimmed", LayerClampWarning)
    if isinstance(norm, CustomNorm):
        return norm(profile.materialize(counts))
    norm.check_dim(profile.dim)
    return norm.from_runs(profile.values, counts, profile.dim)


# ------------------------------------------------------------------- mmc


class MmcProvenance(str, Enum):
    TABLE_FORMULA = "table_formula"
    USER_SUPPLIED = "user_supplied"
    HEURISTIC_ESTIMATE = "heuristic_estimate"


@dataclass(frozen=True)
class MmcBound:
    value: float
    provenance: MmcProvenance

    def __post_init__(self):
        if not self.value >= 1:
            raise ValueError("mmc is at least 1")


def mmc_bound(norm: SymNorm, d: int, *, allow_heuristic: bool = False, seed: int = 0) -> MmcBound:
    """Closed-form mmc bound with leading constant 1 (top-k log factor dropped)."""
    if d < 1:
        raise ValueError("d must be positive")
    table = MmcProvenance.TABLE_FORMULA
    logd = math.log(d) if d > 1 else 1.0
    if isinstance(norm, LpNorm):
        if norm.p <= 2:
            return MmcBound(1.0, table)
        expo = 0.5 if math.isinf(norm.p) else 0.5 - 1.0 / norm.p
        return MmcBound(max(1.0, d**expo), table)
    if isinstance(norm, TopKNorm):
        return MmcBound(max(1.0, math.sqrt(d / norm.k)), table)
    if isinstance(norm, (KSupportNorm, BoxNorm)):
        return MmcBound(max(1.0, logd), table)
    if isinstance(norm, (MaxMixNorm, SumMixNorm)):
        return MmcBound(1.0, table)
    if isinstance(norm, OrliczNorm):
        return MmcBound(max(1.0, math.sqrt(norm.growth * logd)), table)
    if isinstance(norm, CustomNorm) and norm.mmc is not None:
        return MmcBound(max(1.0, float(norm.mmc)), MmcProvenance.USER_SUPPLIED)
    if allow_heuristic:
        return heuristic_mmc(norm, d, trials=101, seed=seed)
    raise ValueError("custom norm needs a user-supplied mmc or allow_heuristic=True")


def _restricted(norm: SymNorm, k: int, d: int | None) -> int:
    dim = d if d is not None else (norm.dim if norm.dim is not None else k)
    if not 1 <= k <= dim:
        raise ValueError("need 1 <= k <= d")
    return dim


def estimate_median(norm: SymNorm, k: int, trials: int, seed: int, d: int | None = None) -> float:
    """Empirical median of the norm restricted to k coordinates on the unit sphere."""
    if trials < 1:
        raise ValueError("trials must be positive")
    dim = _restricted(norm, k, d)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((trials, k))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    vals = np.empty(trials)
    for t in range(trials):
        if isinstance(norm, CustomNorm):
            x = np.zeros(dim)
            x[:k] = g[t]
            vals[t] = norm(x)
        else:
            r, c = _as_runs(g[t])
            vals[t] = norm.from_runs(r, c, dim)
    return float(np.median(vals))


def _flat_max(norm: SymNorm, k: int, dim: int) -> float:
    best = 0.0
    for j in range(1, k + 1):
        best = max(best, norm.from_runs([1.0 / math.sqrt(j)], [j], dim))
    return best


def heuristic_mc(norm: SymNorm, k: int, trials: int, seed: int, d: int | None = None) -> float:
    """Flat-vector maximum over the sphere median for the k-coordinate restriction."""
    dim = _restricted(norm, k, d)
    return _flat_max(norm, k, dim) / estimate_median(norm, k, trials, seed, dim)


def heuristic_mmc(norm: SymNorm, d: int, trials: int = 101, seed: int = 0) -> MmcBound:
    ks = sorted({min(d, 1 << s) for s in range(int(math.log2(d)) + 1)} | {d})
    best = max(heuristic_mc(norm, k, trials, seed, d) for k in ks)
    return MmcBound(max(1.0, best), MmcProvenance.HEURISTIC_ESTIMATE)
